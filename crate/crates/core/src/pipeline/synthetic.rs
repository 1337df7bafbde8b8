//! Template-based synthetic corpus with a known job-related label per tweet.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tweet};
use crate::error::{Error, Result};

struct Family {
    truth: bool,
    weight: f64,
    templates: &'static [&'static str],
    commercial: bool,
}

const FAMILIES: &[Family] = &[
    // job-related and caught by the keyword filter
    Family {
        truth: true,
        weight: 0.26,
        commercial: false,
        templates: &[
            "{i|we|ugh i|honestly i} {really|totally|kinda|seriously} {hate|love|need|like|dread} my job {today|right now|so much|this week}",
            "my boss {yelled at me|called me in|gave me a raise|is so annoying|scheduled me} {again|today|this morning|for saturday}",
            "{long|another|rough|busy|slow} day at work {and i am tired|then bed|need coffee|cant wait for friday}",
            "{just got|finally got|applied for|interviewed for} a new job {at the hospital|at the bank|downtown|at the mall}",
            "{the|our|my} manager {asked me|told me|wants me} to {work late|cover a shift|stay overtime|train the new guy} {tonight|tomorrow|again}",
            "{still|now|officially} jobless {and|so} {looking for work|applying everywhere|need a paycheck} {help|smh|ugh}",
        ],
    },
    // caught by the filter but not about employment
    Family {
        truth: false,
        weight: 0.14,
        commercial: false,
        templates: &[
            "steve jobs {movie|book|biography|documentary} {was|is} {amazing|boring|interesting|overrated} {tonight|honestly|lol}",
            "the final boss {in this game|of zelda|in dark souls|in mario} {is impossible|took forever|was too easy|beat me again}",
            "{his|her|their} work {of art|on the mural|in the play|on that painting} {is beautiful|was stunning|blew me away}",
            "fantasy {team|league|football} manager {traded|dropped|benched} {my star player|a running back|the kicker} {again|today|smh}",
            "{my|your} work {out|outfit} {was|is|looks} {intense|cute|brutal|fire} {today|lol|haha}",
        ],
    },
    // about employment but missed by the filter
    Family {
        truth: true,
        weight: 0.10,
        commercial: false,
        templates: &[
            "{working|worked|pulling} a double shift at the {restaurant|diner|warehouse|hospital} {tonight|today|again}",
            "{payday|paycheck|direct deposit} {finally|tomorrow|today} after {a week|two weeks} of {overtime|shifts|night shifts}",
            "{interview|orientation|training} {tomorrow|today|monday} for {a cashier position|the warehouse|a nursing position} wish me luck",
            "{clocking in|clocked out|on break} {at the store|at the office|at the plant} {finally|again|yay}",
        ],
    },
    // job ads posted by commercial accounts
    Family {
        truth: true,
        weight: 0.05,
        commercial: true,
        templates: &[
            "{Panera Bread|Wegmans|Xerox|Kodak|Paychex}: {Baker|Cashier|Engineer|Nurse|Analyst} - {Night|Day|Part Time} (#{Rochester|Henrietta|Greece}, NY) URL #Job #Jobs #Hiring",
            "{Hiring|Now hiring}: {Line Cook|Shift Lead|Driver} ({Rochester|Pittsford}, NY) URL #{Hospitality|VeteranJob} #Jobs #TweetMyJobs",
        ],
    },
    // ordinary chatter
    Family {
        truth: false,
        weight: 0.45,
        commercial: false,
        templates: &[
            "{lunch|dinner|breakfast|brunch} {was|is} {great|awful|amazing|so good} {today|tonight|lol}",
            "{watching|going to|heading to} {the game|a movie|the beach|the mall} {with friends|tonight|later} {yay|lol|haha}",
            "{school|class|homework} {is|was} {killing me|so boring|finally done} {today|ugh|smh}",
            "{great|good|nice} job {on the game|tonight|team|guys} {proud of you|lets go|haha}",
            "my {dog|cat|mom|little brother} {is|was} {so cute|sick|hungry|asleep} {today|lol|again}",
            "{cant|can not|dont} {sleep|wait for the weekend|believe this weather} {again|tonight|ugh}",
        ],
    },
];

const FILLER: &[&str] = &[
    "lol", "today", "omg", "really", "so", "haha", "ugh", "smh", "again", "now", "tho", "yay", ":)", ":(",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_tweets: usize,
    pub n_accounts: usize,
    pub n_commercial_accounts: usize,
    pub seed: u64,
    /// Inclusive range of creation instants, in Unix seconds.
    pub start: i64,
    pub end: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_tweets: 2000,
            n_accounts: 150,
            n_commercial_accounts: 5,
            seed: 0,
            // 2013-07-01T00:00:00Z .. 2014-06-30T23:59:59Z
            start: 1_372_636_800,
            end: 1_404_172_799,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub truth: BTreeMap<String, bool>,
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("balanced template");
        let options: Vec<&str> = rest[open + 1..close].split('|').collect();
        out.push_str(options.choose(rng).expect("non-empty slot"));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

pub fn generate_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.n_accounts <= cfg.n_commercial_accounts || cfg.n_commercial_accounts == 0 {
        return Err(Error::invalid("need at least one commercial and one individual account"));
    }
    if cfg.end < cfg.start {
        return Err(Error::invalid("end precedes start"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total: f64 = FAMILIES.iter().map(|f| f.weight).sum();
    let mut tweets = Vec::with_capacity(cfg.n_tweets);
    let mut truth = BTreeMap::new();
    for i in 0..cfg.n_tweets {
        let mut u = rng.random::<f64>() * total;
        let family = FAMILIES
            .iter()
            .find(|f| {
                u -= f.weight;
                u < 0.0
            })
            .unwrap_or(&FAMILIES[FAMILIES.len() - 1]);
        let mut text = fill(family.templates.choose(&mut rng).expect("templates"), &mut rng);
        if !family.commercial {
            for _ in 0..rng.random_range(0..3) {
                text.push(' ');
                text.push_str(FILLER.choose(&mut rng).expect("filler"));
            }
        }
        let account = if family.commercial {
            rng.random_range(0..cfg.n_commercial_accounts)
        } else {
            rng.random_range(cfg.n_commercial_accounts..cfg.n_accounts)
        };
        let secs = rng.random_range(cfg.start..=cfg.end);
        let id = format!("syn-{i:06}");
        truth.insert(id.clone(), family.truth);
        tweets.push(Tweet {
            id,
            account_id: format!("acct-{account:04}"),
            created_at_utc: Utc.timestamp_opt(secs, 0).single().expect("valid instant"),
            text,
            latitude: None,
            longitude: None,
        });
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::from_tweets(tweets),
        truth,
    })
}

/// `tweet_id,job_related` with `true`/`false` values.
pub fn write_truth_csv(truth: &BTreeMap<String, bool>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tweet_id", "job_related"])?;
    for (id, y) in truth {
        w.write_record([id.as_str(), if *y { "true" } else { "false" }])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_truth_csv(input: impl Read) -> Result<BTreeMap<String, bool>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Format {
            what: "truth csv",
            line: i + 2,
            message: "expected tweet_id,true|false".into(),
        };
        let id = rec.get(0).ok_or_else(bad)?;
        let y = match rec.get(1).ok_or_else(bad)? {
            "true" | "1" | "Y" => true,
            "false" | "0" | "N" => false,
            _ => return Err(bad()),
        };
        out.insert(id.to_string(), y);
    }
    Ok(out)
}

/// Fixed instant used as the base for simulated submission times.
pub(crate) fn simulation_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2014, 1, 6, 9, 0, 0).single().expect("valid date")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{job_likely_filter, FilterRules, SlangDictionary};

    #[test]
    fn deterministic_and_mixed() {
        let cfg = SyntheticConfig {
            seed: 3,
            ..SyntheticConfig::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        assert_eq!(a, generate_corpus(&cfg).unwrap());
        assert_eq!(a.corpus.len(), 2000);
        let pos = a.truth.values().filter(|&&y| y).count();
        assert!((600..1000).contains(&pos), "{pos}");

        let jl = job_likely_filter(&a.corpus, &FilterRules::default(), &SlangDictionary::new());
        assert!(jl.len() > 500 && jl.len() < 1200, "{}", jl.len());
        let jl_pos = jl.tweets.iter().filter(|t| a.truth[&t.id]).count();
        assert!(jl_pos > jl.len() / 2);
    }

    #[test]
    fn truth_round_trip() {
        let a = generate_corpus(&SyntheticConfig {
            n_tweets: 50,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_truth_csv(&a.truth, &mut buf).unwrap();
        assert_eq!(read_truth_csv(buf.as_slice()).unwrap(), a.truth);
    }
}

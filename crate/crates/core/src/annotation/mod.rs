//! Annotation batches, label storage, agreement statistics, vote
//! aggregation into agreement tiers, and gold-standard assembly.

mod agreement;
mod batches;
mod store;

pub use agreement::{
    agreement_per_batch, agreement_pooled, fleiss_kappa, fleiss_kappa_yes_no, krippendorff_alpha,
    per_worker_consistency, worker_consistency, AgreementReport,
};
pub use batches::{make_batches, make_batches_with_prefix, Batch};
pub use store::{InsertOutcome, LabelStore};

pub(crate) use agreement::{consistency_of, counted_answers};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raters per tweet that tiers are defined over.
pub const RATERS_PER_TWEET: usize = 5;

/// Workers below this duplicate consistency are flagged and their batch re-queued.
pub const QUALIFICATION_THRESHOLD: f64 = 0.8;

/// The question shown to every annotator.
pub const QUESTION: &str = "Is this tweet about employment or job?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Answer {
    Y,
    N,
}

impl Answer {
    pub fn is_yes(self) -> bool {
        self == Answer::Y
    }

    pub fn from_bool(job_related: bool) -> Self {
        if job_related {
            Answer::Y
        } else {
            Answer::N
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Y => "Y",
            Answer::N => "N",
        })
    }
}

impl FromStr for Answer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Y" | "y" => Ok(Answer::Y),
            "N" | "n" => Ok(Answer::N),
            other => Err(Error::invalid(format!("answer must be Y or N, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub batch_id: String,
    pub worker_id: String,
    pub position: usize,
    pub tweet_id: String,
    pub answer: Answer,
    pub submitted_at: DateTime<Utc>,
}

impl LabelRecord {
    pub fn key(&self) -> (String, String, usize) {
        (self.batch_id.clone(), self.worker_id.clone(), self.position)
    }
}

/// Vote pattern among five annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "unanimous-Y")]
    UnanimousYes,
    #[serde(rename = "4/5-Y")]
    FourYes,
    #[serde(rename = "3/5-Y")]
    ThreeYes,
    #[serde(rename = "3/5-N")]
    ThreeNo,
    #[serde(rename = "4/5-N")]
    FourNo,
    #[serde(rename = "unanimous-N")]
    UnanimousNo,
}

impl Tier {
    pub const ALL: [Tier; 6] = [
        Tier::ThreeYes,
        Tier::FourYes,
        Tier::UnanimousYes,
        Tier::ThreeNo,
        Tier::FourNo,
        Tier::UnanimousNo,
    ];

    pub fn from_yes_count(yes: usize) -> Option<Tier> {
        Some(match yes {
            5 => Tier::UnanimousYes,
            4 => Tier::FourYes,
            3 => Tier::ThreeYes,
            2 => Tier::ThreeNo,
            1 => Tier::FourNo,
            0 => Tier::UnanimousNo,
            _ => return None,
        })
    }

    /// Crowd majority label.
    pub fn majority(self) -> bool {
        matches!(self, Tier::UnanimousYes | Tier::FourYes | Tier::ThreeYes)
    }

    pub fn is_unanimous(self) -> bool {
        matches!(self, Tier::UnanimousYes | Tier::UnanimousNo)
    }

    /// Short name used in adjudication queues: `job-3`, `not-job-4`, ...
    pub fn short_name(self) -> &'static str {
        match self {
            Tier::UnanimousYes => "job-5",
            Tier::FourYes => "job-4",
            Tier::ThreeYes => "job-3",
            Tier::ThreeNo => "not-job-3",
            Tier::FourNo => "not-job-4",
            Tier::UnanimousNo => "not-job-5",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::UnanimousYes => "unanimous-Y",
            Tier::FourYes => "4/5-Y",
            Tier::ThreeYes => "3/5-Y",
            Tier::ThreeNo => "3/5-N",
            Tier::FourNo => "4/5-N",
            Tier::UnanimousNo => "unanimous-N",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub tweet_id: String,
    pub yes_count: usize,
    pub no_count: usize,
    pub tier: Tier,
}

/// A tweet that could not be aggregated because it lacks exactly five answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficiency {
    pub tweet_id: String,
    pub answers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    pub labels: Vec<AggregatedLabel>,
    pub deficiencies: Vec<Deficiency>,
}

impl Aggregation {
    /// Tweets per tier, in `Tier::ALL` order.
    pub fn histogram(&self) -> BTreeMap<Tier, usize> {
        tier_histogram(&self.labels)
    }
}

pub fn tier_histogram(labels: &[AggregatedLabel]) -> BTreeMap<Tier, usize> {
    let mut h: BTreeMap<Tier, usize> = Tier::ALL.iter().map(|&t| (t, 0)).collect();
    for l in labels {
        *h.entry(l.tier).or_default() += 1;
    }
    h
}

/// Tallies one counted answer per (tweet, worker); duplicate probe positions
/// contribute only their first occurrence. Tweets without exactly five
/// workers go to the deficiency list.
pub fn aggregate_labels(labels: &[LabelRecord]) -> Aggregation {
    let mut out = Aggregation::default();
    for (tweet, workers) in counted_answers(labels) {
        if workers.len() != RATERS_PER_TWEET {
            out.deficiencies.push(Deficiency {
                tweet_id: tweet.to_string(),
                answers: workers.len(),
            });
            continue;
        }
        let yes = workers.values().filter(|a| a.is_yes()).count();
        out.labels.push(AggregatedLabel {
            tweet_id: tweet.to_string(),
            yes_count: yes,
            no_count: RATERS_PER_TWEET - yes,
            tier: Tier::from_yes_count(yes).expect("yes count within 0..=5"),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldSource {
    UnanimousCrowd,
    Community,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub tweet_id: String,
    pub job_related: bool,
    pub source: GoldSource,
}

/// Unanimous tweets keep the crowd label; every majority-tier tweet takes the
/// community label, which may overturn the crowd.
pub fn build_gold_set(aggregates: &[AggregatedLabel], adjudications: &HashMap<String, bool>) -> Result<Vec<GoldLabel>> {
    let missing: Vec<String> = aggregates
        .iter()
        .filter(|a| !a.tier.is_unanimous() && !adjudications.contains_key(&a.tweet_id))
        .map(|a| a.tweet_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAdjudication(missing));
    }
    Ok(aggregates
        .iter()
        .map(|a| {
            if a.tier.is_unanimous() {
                GoldLabel {
                    tweet_id: a.tweet_id.clone(),
                    job_related: a.tier.majority(),
                    source: GoldSource::UnanimousCrowd,
                }
            } else {
                GoldLabel {
                    tweet_id: a.tweet_id.clone(),
                    job_related: adjudications[&a.tweet_id],
                    source: GoldSource::Community,
                }
            }
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    batch_id: String,
    worker_id: String,
    position: usize,
    tweet_id: String,
    answer: String,
    submitted_at: String,
}

/// Writes the marketplace-style CSV: `batch_id,worker_id,position,tweet_id,answer,submitted_at`.
pub fn write_labels_csv<W: Write>(labels: &[LabelRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in labels {
        w.serialize(LabelRow {
            batch_id: r.batch_id.clone(),
            worker_id: r.worker_id.clone(),
            position: r.position,
            tweet_id: r.tweet_id.clone(),
            answer: r.answer.to_string(),
            submitted_at: r.submitted_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })?;
    }
    if labels.is_empty() {
        w.write_record(["batch_id", "worker_id", "position", "tweet_id", "answer", "submitted_at"])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<LabelRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<LabelRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        let answer = row.answer.parse().map_err(|e: Error| Error::Format {
            what: "labels csv",
            line,
            message: e.to_string(),
        })?;
        let submitted_at = DateTime::parse_from_rfc3339(&row.submitted_at)
            .map_err(|e| Error::Format {
                what: "labels csv",
                line,
                message: format!("submitted_at: {e}"),
            })?
            .with_timezone(&Utc);
        out.push(LabelRecord {
            batch_id: row.batch_id,
            worker_id: row.worker_id,
            position: row.position,
            tweet_id: row.tweet_id,
            answer,
            submitted_at,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn votes(tweet: &str, answers: &[Answer]) -> Vec<LabelRecord> {
        answers
            .iter()
            .enumerate()
            .map(|(w, &a)| LabelRecord {
                batch_id: "b1".into(),
                worker_id: format!("w{w}"),
                position: 0,
                tweet_id: tweet.into(),
                answer: a,
                submitted_at: Utc.with_ymd_and_hms(2014, 2, 1, 8, 0, 0).unwrap(),
            })
            .collect()
    }

    #[test]
    fn tiers_from_votes() {
        use Answer::*;
        let mut labels = votes("bored at work", &[Y, Y, Y, Y, Y]);
        labels.extend(votes("leaving work", &[Y, Y, Y, N, N]));
        labels.extend(votes("friday", &[N, N, N, N, N]));
        let agg = aggregate_labels(&labels);
        let tier = |id: &str| agg.labels.iter().find(|l| l.tweet_id == id).unwrap().tier;
        assert_eq!(tier("bored at work"), Tier::UnanimousYes);
        assert_eq!(tier("leaving work"), Tier::ThreeYes);
        assert_eq!(tier("friday"), Tier::UnanimousNo);
        assert!(agg.deficiencies.is_empty());
        assert_eq!(agg.histogram().values().sum::<usize>(), 3);
    }

    #[test]
    fn duplicate_position_counts_once_first_wins() {
        use Answer::*;
        let mut labels = votes("t", &[Y, Y, Y, Y, N]);
        // worker w4 also answered a later duplicate position with Y
        let mut dup = labels[4].clone();
        dup.position = 7;
        dup.answer = Y;
        labels.push(dup);
        let agg = aggregate_labels(&labels);
        assert_eq!(agg.labels[0].yes_count, 4);
        assert_eq!(agg.labels[0].tier, Tier::FourYes);
    }

    #[test]
    fn short_tweets_are_deficient() {
        use Answer::*;
        let agg = aggregate_labels(&votes("t", &[Y, Y, N]));
        assert!(agg.labels.is_empty());
        assert_eq!(
            agg.deficiencies,
            vec![Deficiency {
                tweet_id: "t".into(),
                answers: 3
            }]
        );
    }

    fn agg(id: &str, yes: usize) -> AggregatedLabel {
        AggregatedLabel {
            tweet_id: id.into(),
            yes_count: yes,
            no_count: 5 - yes,
            tier: Tier::from_yes_count(yes).unwrap(),
        }
    }

    #[test]
    fn gold_set_rules() {
        let aggs = vec![agg("u", 5), agg("n3", 2), agg("j4", 4)];
        let adj: HashMap<String, bool> = [("n3".to_string(), true), ("j4".to_string(), false)].into();
        let gold = build_gold_set(&aggs, &adj).unwrap();
        assert_eq!(
            gold[0],
            GoldLabel {
                tweet_id: "u".into(),
                job_related: true,
                source: GoldSource::UnanimousCrowd
            }
        );
        assert!(gold[1].job_related && gold[1].source == GoldSource::Community);
        assert!(!gold[2].job_related && gold[2].source == GoldSource::Community);

        let err = build_gold_set(&aggs, &HashMap::new()).unwrap_err();
        match err {
            Error::MissingAdjudication(ids) => assert_eq!(ids, vec!["n3".to_string(), "j4".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tier_serde_names() {
        assert_eq!(serde_json::to_string(&Tier::FourYes).unwrap(), "\"4/5-Y\"");
        assert_eq!(serde_json::to_string(&Tier::UnanimousNo).unwrap(), "\"unanimous-N\"");
        assert_eq!(Tier::ThreeNo.short_name(), "not-job-3");
        assert_eq!(serde_json::to_string(&GoldSource::UnanimousCrowd).unwrap(), "\"unanimous-crowd\"");
    }

    #[test]
    fn labels_csv_round_trip() {
        use Answer::*;
        let labels = votes("t1", &[Y, N, Y, N, Y]);
        let mut buf = Vec::new();
        write_labels_csv(&labels, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("batch_id,worker_id,position,tweet_id,answer,submitted_at\n"));
        assert!(text.contains("b1,w1,0,t1,N,2014-02-01T08:00:00Z"));
        assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), labels);
        assert!(read_labels_csv("batch_id,worker_id,position,tweet_id,answer,submitted_at\nb,w,0,t,maybe,2014-02-01T08:00:00Z\n".as_bytes()).is_err());
    }
}

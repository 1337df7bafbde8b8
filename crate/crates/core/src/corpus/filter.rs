use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use super::{normalize_text, tokenize, Corpus, SlangDictionary};
use crate::error::{Error, Result};

/// Consecutive token pattern where each slot lists its accepted alternatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhrasePattern {
    slots: Vec<Vec<String>>,
}

impl PhrasePattern {
    /// Parses `{my|your|his|her|their|at} work` style patterns.
    pub fn parse(src: &str) -> Result<Self> {
        let mut slots = Vec::new();
        for part in src.split_whitespace() {
            let alts: Vec<String> = match part.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
                Some(inner) => inner.split('|').map(|a| a.trim().to_lowercase()).collect(),
                None => {
                    if part.contains(['{', '}', '|']) {
                        return Err(Error::invalid(format!("malformed slot {part:?} in phrase {src:?}")));
                    }
                    vec![part.to_lowercase()]
                }
            };
            if alts.iter().any(String::is_empty) {
                return Err(Error::invalid(format!("empty alternative in phrase {src:?}")));
            }
            slots.push(alts);
        }
        if slots.is_empty() {
            return Err(Error::invalid("empty phrase"));
        }
        Ok(PhrasePattern { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn matches(&self, tokens: &[String]) -> bool {
        let n = self.slots.len();
        tokens.len() >= n
            && tokens.windows(n).any(|w| {
                w.iter()
                    .zip(&self.slots)
                    .all(|(tok, alts)| alts.iter().any(|a| a == tok))
            })
    }
}

impl fmt::Display for PhrasePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|alts| {
                if alts.len() == 1 {
                    alts[0].clone()
                } else {
                    format!("{{{}}}", alts.join("|"))
                }
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterRules {
    pub include_terms: BTreeSet<String>,
    pub include_phrases: Vec<PhrasePattern>,
    pub exclude_terms: BTreeSet<String>,
    pub exclude_phrases: Vec<PhrasePattern>,
    pub min_tokens: usize,
}

const DEFAULT_RULES: &str = "\
[include_terms]
job
jobless
manager
boss

[include_phrases]
{my|your|his|her|their|at} work

[exclude_terms]
school
class
homework
student
course

[exclude_phrases]
{good|nice|great} job

[min_tokens]
5
";

impl Default for FilterRules {
    /// The original inclusion/exclusion table with a five-token minimum.
    fn default() -> Self {
        FilterRules::parse(DEFAULT_RULES).expect("built-in rules parse")
    }
}

impl FilterRules {
    /// Parses the sectioned rule format: `[include_terms]`, `[include_phrases]`,
    /// `[exclude_terms]`, `[exclude_phrases]`, `[min_tokens]`, one entry per line,
    /// `#` comments. Missing sections are empty; a missing `[min_tokens]` means 5.
    pub fn parse(src: &str) -> Result<Self> {
        let mut rules = FilterRules {
            include_terms: BTreeSet::new(),
            include_phrases: Vec::new(),
            exclude_terms: BTreeSet::new(),
            exclude_phrases: Vec::new(),
            min_tokens: 5,
        };
        let mut section: Option<String> = None;
        for (i, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Format {
                what: "filter rules",
                line: i + 1,
                message,
            };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            match section.as_deref() {
                Some("include_terms") => single_term(line).map(|t| rules.include_terms.insert(t)).map_err(err)?,
                Some("exclude_terms") => single_term(line).map(|t| rules.exclude_terms.insert(t)).map_err(err)?,
                Some("include_phrases") => {
                    rules.include_phrases.push(PhrasePattern::parse(line).map_err(|e| err(e.to_string()))?);
                    true
                }
                Some("exclude_phrases") => {
                    rules.exclude_phrases.push(PhrasePattern::parse(line).map_err(|e| err(e.to_string()))?);
                    true
                }
                Some("min_tokens") => {
                    rules.min_tokens = line.parse().map_err(|_| err(format!("bad count {line:?}")))?;
                    true
                }
                Some(other) => return Err(err(format!("unknown section [{other}]"))),
                None => return Err(err("entry before any section header".into())),
            };
        }
        rules.validate()?;
        Ok(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_tokens == 0 {
            return Err(Error::invalid("min_tokens must be at least 1"));
        }
        Ok(())
    }

    pub fn includes(&self, tokens: &[String]) -> bool {
        tokens.iter().any(|t| self.include_terms.contains(t))
            || self.include_phrases.iter().any(|p| p.matches(tokens))
    }

    pub fn excludes(&self, tokens: &[String]) -> bool {
        tokens.iter().any(|t| self.exclude_terms.contains(t))
            || self.exclude_phrases.iter().any(|p| p.matches(tokens))
    }

    /// Retention rule over normalized tokens; exclusion beats inclusion.
    pub fn accepts(&self, tokens: &[String]) -> bool {
        tokens.len() >= self.min_tokens && self.includes(tokens) && !self.excludes(tokens)
    }
}

fn single_term(line: &str) -> std::result::Result<String, String> {
    if line.split_whitespace().count() != 1 {
        return Err(format!("term {line:?} must be a single token"));
    }
    Ok(line.to_lowercase())
}

/// Keeps tweets whose normalized tokens pass `rules`. Order is preserved.
pub fn job_likely_filter(corpus: &Corpus, rules: &FilterRules, slang: &SlangDictionary) -> Corpus {
    let keep: Vec<bool> = corpus
        .tweets
        .par_iter()
        .map(|t| rules.accepts(&tokenize(&normalize_text(&t.text, slang))))
        .collect();
    let tweets = corpus
        .tweets
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect();
    Corpus {
        tweets,
        provenance: corpus.provenance.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tweet;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(&normalize_text(s, &SlangDictionary::new()))
    }

    #[test]
    fn default_rules_mirror_the_table() {
        let r = FilterRules::default();
        assert_eq!(r.include_terms.len(), 4);
        assert!(r.include_terms.contains("jobless"));
        assert_eq!(r.include_phrases[0].to_string(), "{my|your|his|her|their|at} work");
        assert_eq!(r.exclude_terms.len(), 5);
        assert_eq!(r.exclude_phrases[0].to_string(), "{good|nice|great} job");
        assert_eq!(r.min_tokens, 5);
    }

    #[test]
    fn manager_tweet_is_retained() {
        let r = FilterRules::default();
        assert!(r.accepts(&toks("@SOMEONE @SOMEONE shit manager shit players shit everything")));
    }

    #[test]
    fn exclusion_and_length() {
        let r = FilterRules::default();
        assert!(!r.accepts(&toks("great job team")));
        // long enough but the exclude phrase still applies
        assert!(!r.accepts(&toks("great job team you all did it")));
        assert!(!r.accepts(&toks("my boss said our class starts now")));
        assert!(r.accepts(&toks("my boss said our shift starts now")));
    }

    #[test]
    fn token_level_matching_only() {
        let r = FilterRules::default();
        assert!(!r.accepts(&toks("these jobsite photos are really neat")));
        assert!(r.accepts(&toks("been jobless for three months now")));
        // phrase slots require adjacency
        assert!(r.accepts(&toks("so tired at work today honestly")));
        assert!(!r.accepts(&toks("my new car does work great today")));
    }

    #[test]
    fn parse_errors() {
        assert!(FilterRules::parse("job\n").is_err());
        assert!(FilterRules::parse("[include_terms]\ntwo words\n").is_err());
        assert!(FilterRules::parse("[min_tokens]\n0\n").is_err());
        assert!(FilterRules::parse("[whatever]\nx\n").is_err());
        assert!(PhrasePattern::parse("{a|} b").is_err());
        assert!(PhrasePattern::parse("a|b").is_err());
    }

    #[test]
    fn filter_on_corpus() {
        let mk = |id: &str, text: &str| Tweet {
            id: id.into(),
            account_id: "u".into(),
            created_at_utc: Utc.with_ymd_and_hms(2013, 7, 1, 12, 0, 0).unwrap(),
            text: text.into(),
            latitude: None,
            longitude: None,
        };
        let c = Corpus::from_tweets(vec![
            mk("1", "I really hate my job so much"),
            mk("2", "great job team"),
            mk("3", "my boss said our class starts now"),
        ]);
        let out = job_likely_filter(&c, &FilterRules::default(), &SlangDictionary::new());
        assert_eq!(out.len(), 1);
        assert_eq!(out.tweets[0].id, "1");
    }

    proptest! {
        #[test]
        fn retained_output_satisfies_rules(words in proptest::collection::vec(
            prop_oneof!["job", "boss", "class", "my", "work", "good", "the", "a", "day", "great"], 0..12)) {
            let r = FilterRules::default();
            let tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
            if r.accepts(&tokens) {
                prop_assert!(tokens.len() >= r.min_tokens);
                prop_assert!(r.includes(&tokens));
                prop_assert!(!r.excludes(&tokens));
            }
        }
    }
}

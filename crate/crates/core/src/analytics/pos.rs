use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 36-tag Penn Treebank part-of-speech set (punctuation tags excluded).
pub const PENN_TAGS: [&str; 36] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS", "PDT", "POS",
    "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB",
];

fn tag_index(tag: &str) -> Result<usize> {
    PENN_TAGS
        .iter()
        .position(|t| *t == tag)
        .ok_or_else(|| Error::UnknownTag(tag.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosProfile {
    /// Mean per-tweet normalized frequency for every tag in the set.
    pub means: BTreeMap<String, f64>,
    pub tweets: usize,
    /// Tweets with no tokens, left out of the average.
    pub skipped_empty: usize,
}

/// Each tweet is a list of `(token, tag)` pairs.
pub fn pos_profile<T, S>(tagged: &[T]) -> Result<PosProfile>
where
    T: AsRef<[(S, S)]>,
    S: AsRef<str>,
{
    let mut sums = [0.0f64; 36];
    let mut tweets = 0;
    let mut skipped_empty = 0;
    for tweet in tagged {
        let tweet = tweet.as_ref();
        if tweet.is_empty() {
            skipped_empty += 1;
            continue;
        }
        let mut counts = [0usize; 36];
        for (_, tag) in tweet {
            counts[tag_index(tag.as_ref())?] += 1;
        }
        let n = tweet.len() as f64;
        for (s, c) in sums.iter_mut().zip(counts) {
            *s += c as f64 / n;
        }
        tweets += 1;
    }
    let means = PENN_TAGS
        .iter()
        .zip(sums)
        .map(|(t, s)| (t.to_string(), if tweets == 0 { 0.0 } else { s / tweets as f64 }))
        .collect();
    Ok(PosProfile {
        means,
        tweets,
        skipped_empty,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosDifference {
    pub tag: String,
    pub group_a: f64,
    pub group_b: f64,
    /// `group_a - group_b`
    pub difference: f64,
}

pub fn compare_profiles(a: &PosProfile, b: &PosProfile) -> Vec<PosDifference> {
    PENN_TAGS
        .iter()
        .map(|&tag| {
            let ga = a.means.get(tag).copied().unwrap_or(0.0);
            let gb = b.means.get(tag).copied().unwrap_or(0.0);
            PosDifference {
                tag: tag.to_string(),
                group_a: ga,
                group_b: gb,
                difference: ga - gb,
            }
        })
        .collect()
}

/// Parses `token/TAG token/TAG ...`; the tag is after the last slash.
pub fn parse_tagged_line(line: &str) -> Result<Vec<(String, String)>> {
    line.split_whitespace()
        .map(|item| {
            let (tok, tag) = item
                .rsplit_once('/')
                .ok_or_else(|| Error::invalid(format!("{item:?} is not token/TAG")))?;
            tag_index(tag)?;
            Ok((tok.to_string(), tag.to_string()))
        })
        .collect()
}

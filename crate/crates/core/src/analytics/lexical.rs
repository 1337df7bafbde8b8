use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexicalStats {
    pub tweet_count: usize,
    pub account_count: usize,
    pub token_count: usize,
    pub avg_tokens_per_tweet: f64,
    pub unique_token_count: usize,
    /// Corpus-level unique count divided by tweet count.
    pub avg_unique_tokens_per_tweet: f64,
    pub unique_to_total_ratio: f64,
    pub hapax_count: usize,
    pub avg_hapax_per_tweet: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl LexicalStats {
    pub fn from_counts(
        tweet_count: usize,
        account_count: usize,
        token_count: usize,
        unique_token_count: usize,
        hapax_count: usize,
    ) -> Self {
        LexicalStats {
            tweet_count,
            account_count,
            token_count,
            avg_tokens_per_tweet: ratio(token_count, tweet_count),
            unique_token_count,
            avg_unique_tokens_per_tweet: ratio(unique_token_count, tweet_count),
            unique_to_total_ratio: ratio(unique_token_count, token_count),
            hapax_count,
            avg_hapax_per_tweet: ratio(hapax_count, tweet_count),
        }
    }

    /// Recomputes every derived field from the counts.
    pub fn check_consistency(&self) -> Result<()> {
        if !(self.hapax_count <= self.unique_token_count && self.unique_token_count <= self.token_count) {
            return Err(Error::invalid("expected hapax <= unique <= tokens"));
        }
        let again = Self::from_counts(
            self.tweet_count,
            self.account_count,
            self.token_count,
            self.unique_token_count,
            self.hapax_count,
        );
        let pairs = [
            (self.avg_tokens_per_tweet, again.avg_tokens_per_tweet),
            (self.avg_unique_tokens_per_tweet, again.avg_unique_tokens_per_tweet),
            (self.unique_to_total_ratio, again.unique_to_total_ratio),
            (self.avg_hapax_per_tweet, again.avg_hapax_per_tweet),
        ];
        if pairs.iter().any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::invalid("derived lexical ratios disagree with counts"));
        }
        Ok(())
    }
}

/// Items are `(account_id, tokens)`.
pub fn lexical_stats<'a, I, T>(tweets: I) -> LexicalStats
where
    I: IntoIterator<Item = (&'a str, T)>,
    T: AsRef<[String]>,
{
    let mut freq: HashMap<String, usize> = HashMap::new();
    let mut accounts: HashSet<&str> = HashSet::new();
    let mut tweet_count = 0;
    let mut token_count = 0;
    for (account, tokens) in tweets {
        tweet_count += 1;
        accounts.insert(account);
        for t in tokens.as_ref() {
            token_count += 1;
            *freq.entry(t.clone()).or_default() += 1;
        }
    }
    let hapax = freq.values().filter(|&&c| c == 1).count();
    LexicalStats::from_counts(tweet_count, accounts.len(), token_count, freq.len(), hapax)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn mini_corpus() {
        let s = lexical_stats([("u1", toks("a b")), ("u2", toks("a c"))]);
        assert_eq!((s.token_count, s.unique_token_count, s.hapax_count), (4, 3, 2));
        assert_eq!(s.avg_tokens_per_tweet, 2.0);
        assert_eq!(s.unique_to_total_ratio, 0.75);
        assert_eq!(s.account_count, 2);
        s.check_consistency().unwrap();
    }

    #[test]
    fn empty_is_zero() {
        let s = lexical_stats(std::iter::empty::<(&str, Vec<String>)>());
        assert_eq!(s, LexicalStats::default());
    }

    #[test]
    fn printed_group_row() {
        let s = LexicalStats::from_counts(119_376, 0, 0, 103_089, 69_542);
        assert!((s.avg_unique_tokens_per_tweet - 0.864).abs() < 1e-3);
        assert!((s.avg_hapax_per_tweet - 0.583).abs() < 1e-3);
    }
}

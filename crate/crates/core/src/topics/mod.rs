//! Per-user documents and an LDA topic model fitted by collapsed Gibbs
//! sampling.

mod lda;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use lda::{
    fit_lda, fit_lda_observed, read_topic_model, write_topic_model, LdaConfig, TopicModel, TopicSummary,
    LDA_MAGIC, LDA_VERSION,
};

pub const DEFAULT_MIN_DOC_LEN: usize = 5;
pub const DEFAULT_STOPLIST_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDocument {
    pub account_id: String,
    pub tokens: Vec<String>,
}

impl UserDocument {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentSet {
    /// Sorted by account id.
    pub documents: Vec<UserDocument>,
    pub dropped: usize,
    pub stoplist: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocumentOptions {
    pub min_len: usize,
    /// How many of the most frequent corpus tokens to drop; 0 disables.
    pub stoplist_size: usize,
}

impl Default for DocumentOptions {
    fn default() -> Self {
        DocumentOptions {
            min_len: DEFAULT_MIN_DOC_LEN,
            stoplist_size: DEFAULT_STOPLIST_SIZE,
        }
    }
}

/// Concatenates each account's token lists in input order. Documents shorter
/// than `min_len` are dropped and counted.
pub fn build_user_documents<S, T>(tweets: &[(S, T)], min_len: usize) -> DocumentSet
where
    S: AsRef<str>,
    T: AsRef<[String]>,
{
    prepare_documents(
        tweets,
        &DocumentOptions {
            min_len,
            stoplist_size: 0,
        },
    )
}

/// Groups by account, removes the stoplist, then applies the length floor.
pub fn prepare_documents<S, T>(tweets: &[(S, T)], opts: &DocumentOptions) -> DocumentSet
where
    S: AsRef<str>,
    T: AsRef<[String]>,
{
    let mut grouped: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (account, tokens) in tweets {
        grouped
            .entry(account.as_ref())
            .or_default()
            .extend(tokens.as_ref().iter().cloned());
    }
    let stoplist = most_frequent_tokens(grouped.values().map(Vec::as_slice), opts.stoplist_size);
    let mut dropped = 0;
    let documents = grouped
        .into_iter()
        .filter_map(|(account, tokens)| {
            let tokens: Vec<String> = tokens.into_iter().filter(|t| !stoplist.contains(t)).collect();
            if tokens.len() < opts.min_len {
                dropped += 1;
                None
            } else {
                Some(UserDocument {
                    account_id: account.to_string(),
                    tokens,
                })
            }
        })
        .collect();
    DocumentSet {
        documents,
        dropped,
        stoplist,
    }
}

/// The `n` most frequent tokens, frequency ties broken lexicographically.
pub fn most_frequent_tokens<'a>(docs: impl IntoIterator<Item = &'a [String]>, n: usize) -> BTreeSet<String> {
    if n == 0 {
        return BTreeSet::new();
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for t in doc {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn grouping_and_threshold() {
        let tweets = vec![
            ("u1", t("a b c")),
            ("u2", t("x y z w v")),
            ("u1", t("d e")),
        ];
        let set = build_user_documents(&tweets, 5);
        assert_eq!(set.documents.len(), 2);
        assert_eq!(set.documents[0].tokens, t("a b c d e"));
        assert_eq!(set.dropped, 0);

        let short = vec![("u3", t("one two three"))];
        let set = build_user_documents(&short, 5);
        assert!(set.documents.is_empty());
        assert_eq!(set.dropped, 1);

        assert_eq!(build_user_documents(&tweets, 5), build_user_documents(&tweets, 5));
    }

    #[test]
    fn stoplist_drops_most_frequent() {
        let tweets = vec![("u1", t("the the the job job boss a b c d e")), ("u2", t("the job x y z w v"))];
        let set = prepare_documents(
            &tweets,
            &DocumentOptions {
                min_len: 5,
                stoplist_size: 2,
            },
        );
        assert_eq!(set.stoplist.iter().map(String::as_str).collect::<Vec<_>>(), ["job", "the"]);
        assert_eq!(set.documents[0].tokens, t("boss a b c d e"));
        assert_eq!(set.documents[1].tokens, t("x y z w v"));
    }
}

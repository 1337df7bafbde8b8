use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_url, Corpus, URL_PLACEHOLDER};

pub const DEFAULT_JOB_HASHTAGS: [&str; 6] = ["job", "jobs", "hiring", "tweetmyjobs", "veteranjob", "hospitality"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountParams {
    /// Lowercase, without the `#`.
    pub job_hashtags: BTreeSet<String>,
    pub min_signals: usize,
    /// An account is commercial when its ad-like share reaches this.
    pub theta: f64,
    /// The colon must appear among this many leading non-URL tokens.
    pub title_colon_window: usize,
}

impl Default for AccountParams {
    fn default() -> Self {
        AccountParams {
            job_hashtags: DEFAULT_JOB_HASHTAGS.iter().map(|s| s.to_string()).collect(),
            min_signals: 2,
            theta: 0.5,
            title_colon_window: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdSignals {
    pub job_hashtag: bool,
    pub url: bool,
    pub title_pattern: bool,
}

impl AdSignals {
    pub fn count(&self) -> usize {
        [self.job_hashtag, self.url, self.title_pattern]
            .into_iter()
            .filter(|&b| b)
            .count()
    }
}

/// Evaluates the three signals on raw tweet text.
pub fn ad_signals(text: &str, params: &AccountParams) -> AdSignals {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let job_hashtag = tokens.iter().any(|t| {
        t.strip_prefix('#').is_some_and(|tag| {
            let tag: String = tag
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect();
            params.job_hashtags.contains(&tag)
        })
    });
    let url = tokens.iter().any(|t| is_url(t) || *t == URL_PLACEHOLDER);
    let colon = tokens
        .iter()
        .filter(|t| !is_url(t))
        .take(params.title_colon_window)
        .any(|t| t.contains(':'));
    let paren = text
        .find('(')
        .is_some_and(|open| text[open + 1..].contains(')'));
    AdSignals {
        job_hashtag,
        url,
        title_pattern: colon && paren,
    }
}

pub fn is_ad_like(text: &str, params: &AccountParams) -> bool {
    ad_signals(text, params).count() >= params.min_signals
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountType {
    Individual,
    Commercial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountClassification {
    pub account_type: AccountType,
    pub ad_like: usize,
    pub total: usize,
}

pub fn classify_account<S: AsRef<str>>(tweets: &[S], params: &AccountParams) -> AccountClassification {
    let ad_like = tweets.iter().filter(|t| is_ad_like(t.as_ref(), params)).count();
    let total = tweets.len();
    let commercial = total > 0 && ad_like as f64 / total as f64 >= params.theta;
    AccountClassification {
        account_type: if commercial {
            AccountType::Commercial
        } else {
            AccountType::Individual
        },
        ad_like,
        total,
    }
}

pub fn separate_accounts(corpus: &Corpus, params: &AccountParams) -> BTreeMap<String, AccountClassification> {
    let mut by_account: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in &corpus.tweets {
        by_account.entry(&t.account_id).or_default().push(&t.text);
    }
    let grouped: Vec<(&str, Vec<&str>)> = by_account.into_iter().collect();
    grouped
        .par_iter()
        .map(|(acct, texts)| (acct.to_string(), classify_account(texts, params)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PANERA: &str =
        "Panera Bread: Baker - Night (#Rochester, NY) URL #Hospitality #VeteranJob #Job #Jobs #TweetMyJobs";

    #[test]
    fn ad_example() {
        let p = AccountParams::default();
        let s = ad_signals(PANERA, &p);
        assert_eq!(s.count(), 3);
        assert_eq!(classify_account(&[PANERA], &p).account_type, AccountType::Commercial);
    }

    #[test]
    fn personal_example() {
        let p = AccountParams::default();
        let t = "two more days of work then I finally get a day off.";
        assert!(!is_ad_like(t, &p));
        assert_eq!(classify_account(&[t], &p).account_type, AccountType::Individual);
    }

    #[test]
    fn threshold_and_order() {
        let p = AccountParams::default();
        let personal = "back to work tomorrow";
        let tweets = [PANERA, personal, personal, personal];
        let c = classify_account(&tweets, &p);
        assert_eq!((c.ad_like, c.account_type), (1, AccountType::Individual));
        let two = [personal, PANERA, personal, PANERA];
        assert_eq!(classify_account(&two, &p).account_type, AccountType::Commercial);
        let mut rev = two;
        rev.reverse();
        assert_eq!(classify_account(&rev, &p), classify_account(&two, &p));
    }

    #[test]
    fn single_signal_is_not_enough() {
        let p = AccountParams::default();
        assert!(!is_ad_like("look at this http://t.co/x", &p));
        assert!(is_ad_like("we are #hiring http://t.co/x", &p));
        // a URL's own colon is not a title colon
        assert!(!ad_signals("http://x.co (y)", &p).title_pattern);
    }
}

//! Message ingestion, normalization and rule-based candidate filtering.

mod filter;
mod normalize;

pub use filter::{job_likely_filter, FilterRules, PhrasePattern};
pub(crate) use normalize::is_url;
pub use normalize::{normalize_text, tokenize, SlangDictionary, MENTION_PLACEHOLDER, URL_PLACEHOLDER};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One short message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub account_id: String,
    pub created_at_utc: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longitude: Option<f64>,
}

impl Tweet {
    /// Normalized tokens of this message.
    pub fn tokens(&self, slang: &SlangDictionary) -> Vec<String> {
        tokenize(&normalize_text(&self.text, slang))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    pub ingested_at: DateTime<Utc>,
}

/// Tweets ordered by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub tweets: Vec<Tweet>,
    pub provenance: Option<Provenance>,
}

impl Corpus {
    /// Builds a corpus from arbitrary tweets, sorting by id and keeping the
    /// first occurrence of a repeated id.
    pub fn from_tweets(mut tweets: Vec<Tweet>) -> Self {
        tweets.sort_by(|a, b| a.id.cmp(&b.id));
        tweets.dedup_by(|b, a| a.id == b.id);
        Corpus {
            tweets,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Tweet> {
        self.tweets
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.tweets[i])
    }
}

/// Outcome of reading a JSONL message file.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub corpus: Corpus,
    /// Lines that failed the schema check.
    pub skipped: usize,
    /// Well-formed lines whose id had already been seen.
    pub duplicates: usize,
}

#[derive(Deserialize)]
struct RawTweet {
    id: String,
    account_id: String,
    created_at_utc: String,
    text: String,
    #[serde(default)]
    latitude: Option<f64>,
    #[serde(default)]
    longitude: Option<f64>,
}

fn parse_line(line: &str) -> std::result::Result<Tweet, String> {
    let raw: RawTweet = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let created_at_utc = DateTime::parse_from_rfc3339(&raw.created_at_utc)
        .map_err(|e| format!("created_at_utc: {e}"))?
        .with_timezone(&Utc);
    if raw.text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(Tweet {
        id: raw.id,
        account_id: raw.account_id,
        created_at_utc,
        text: raw.text,
        latitude: raw.latitude,
        longitude: raw.longitude,
    })
}

/// Reads one JSON object per line. Malformed lines are skipped and counted;
/// only an unreadable file is fatal.
pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = read_jsonl(BufReader::new(file)).map_err(|e| Error::io(path, e))?;
    report.corpus.provenance = Some(Provenance {
        source: path.to_path_buf(),
        ingested_at: Utc::now(),
    });
    Ok(report)
}

pub fn read_jsonl(reader: impl BufRead) -> std::io::Result<IngestReport> {
    let mut tweets = Vec::new();
    let mut skipped = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(t) => tweets.push(t),
            Err(msg) => {
                log::warn!("line {}: skipped malformed record: {msg}", lineno + 1);
                skipped += 1;
            }
        }
    }
    let before = tweets.len();
    // stable sort keeps the earliest line for a repeated id
    tweets.sort_by(|a, b| a.id.cmp(&b.id));
    tweets.dedup_by(|b, a| a.id == b.id);
    let duplicates = before - tweets.len();
    if duplicates > 0 {
        log::warn!("dropped {duplicates} record(s) with repeated ids");
    }
    Ok(IngestReport {
        corpus: Corpus {
            tweets,
            provenance: None,
        },
        skipped,
        duplicates,
    })
}

#[derive(Serialize)]
struct FlaggedTweet<'a> {
    #[serde(flatten)]
    tweet: &'a Tweet,
    job_likely: bool,
}

/// Writes tweets in the ingestion schema plus `"job_likely": true`.
pub fn write_job_likely_jsonl(tweets: &[Tweet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for tweet in tweets {
        serde_json::to_writer(
            &mut out,
            &FlaggedTweet {
                tweet,
                job_likely: true,
            },
        )?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes tweets in the ingestion schema.
pub fn write_jsonl(tweets: &[Tweet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for tweet in tweets {
        serde_json::to_writer(&mut out, tweet)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

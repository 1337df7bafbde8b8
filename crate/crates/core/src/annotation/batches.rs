use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One annotation task: a list of tweet ids in which some entries repeat an
/// earlier entry to probe a worker's self-consistency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub id: String,
    pub items: Vec<String>,
    /// `(first, repeat)` positions; `first < repeat` and both hold the same tweet.
    pub dup_pairs: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Distinct tweet ids in first-seen order.
    pub fn unique_tweets(&self) -> Vec<&str> {
        let repeats: std::collections::HashSet<usize> = self.dup_pairs.iter().map(|&(_, b)| b).collect();
        self.items
            .iter()
            .enumerate()
            .filter(|(i, _)| !repeats.contains(i))
            .map(|(_, t)| t.as_str())
            .collect()
    }

    /// Checks the duplicate bookkeeping against the item list.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashMap::new();
        let mut expected_pairs = Vec::new();
        for (pos, id) in self.items.iter().enumerate() {
            if let Some(&first) = seen.get(id.as_str()) {
                expected_pairs.push((first, pos));
            } else {
                seen.insert(id.as_str(), pos);
            }
        }
        let mut declared = self.dup_pairs.clone();
        declared.sort_unstable();
        expected_pairs.sort_unstable();
        if declared != expected_pairs {
            return Err(Error::invalid(format!(
                "batch {}: duplicate pairs {:?} do not match items (expected {:?})",
                self.id, self.dup_pairs, expected_pairs
            )));
        }
        Ok(())
    }
}

/// Splits `tweets` into consecutive chunks of `base_size` and adds `dup_count`
/// repeated members to each, shuffling positions. A trailing short chunk forms
/// its own batch with at most as many repeats as it has members.
pub fn make_batches(tweets: &[String], base_size: usize, dup_count: usize, seed: u64) -> Result<Vec<Batch>> {
    make_batches_with_prefix(tweets, base_size, dup_count, seed, "batch")
}

pub fn make_batches_with_prefix(
    tweets: &[String],
    base_size: usize,
    dup_count: usize,
    seed: u64,
    prefix: &str,
) -> Result<Vec<Batch>> {
    if base_size == 0 {
        return Err(Error::invalid("base_size must be positive"));
    }
    if dup_count > base_size {
        return Err(Error::invalid(format!(
            "dup_count {dup_count} exceeds base_size {base_size}"
        )));
    }
    {
        let mut sorted: Vec<&String> = tweets.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("tweet {} listed twice", w[0])));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::with_capacity(tweets.len().div_ceil(base_size));
    for (i, chunk) in tweets.chunks(base_size).enumerate() {
        let dups = dup_count.min(chunk.len());
        let mut members: Vec<usize> = (0..chunk.len()).collect();
        members.shuffle(&mut rng);
        let mut items: Vec<String> = chunk.to_vec();
        items.extend(members[..dups].iter().map(|&m| chunk[m].clone()));
        items.shuffle(&mut rng);

        let mut first_seen = std::collections::HashMap::new();
        let mut dup_pairs = Vec::with_capacity(dups);
        for (pos, id) in items.iter().enumerate() {
            match first_seen.get(id) {
                Some(&first) => dup_pairs.push((first, pos)),
                None => {
                    first_seen.insert(id.clone(), pos);
                }
            }
        }
        batches.push(Batch {
            id: format!("{prefix}-{:04}", i + 1),
            items,
            dup_pairs,
        });
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i:05}")).collect()
    }

    #[test]
    fn fifty_batches_of_forty_five() {
        let batches = make_batches(&ids(2000), 40, 5, 7).unwrap();
        assert_eq!(batches.len(), 50);
        for b in &batches {
            assert_eq!(b.len(), 45);
            assert_eq!(b.dup_pairs.len(), 5);
            assert_eq!(b.unique_tweets().len(), 40);
            b.validate().unwrap();
            for &(a, r) in &b.dup_pairs {
                assert!(a < r);
                assert_eq!(b.items[a], b.items[r]);
            }
        }
        let mut all: Vec<&str> = batches.iter().flat_map(|b| b.unique_tweets()).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 2000);
    }

    #[test]
    fn no_duplicates_requested() {
        let batches = make_batches(&ids(40), 40, 0, 1).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 40);
        assert!(batches[0].dup_pairs.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = make_batches(&ids(80), 40, 5, 99).unwrap();
        let b = make_batches(&ids(80), 40, 5, 99).unwrap();
        assert_eq!(a, b);
        let c = make_batches(&ids(80), 40, 5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn short_final_batch_and_errors() {
        let batches = make_batches(&ids(43), 40, 5, 3).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].len(), 3 + 3);
        assert!(make_batches(&ids(10), 4, 5, 0).is_err());
        let mut dup = ids(3);
        dup.push("t00000".into());
        assert!(make_batches(&dup, 40, 0, 0).is_err());
    }

    #[test]
    fn validate_catches_bad_pairs() {
        let b = Batch {
            id: "x".into(),
            items: vec!["a".into(), "b".into(), "a".into()],
            dup_pairs: vec![],
        };
        assert!(b.validate().is_err());
    }
}

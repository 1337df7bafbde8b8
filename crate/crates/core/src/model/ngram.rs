use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub max_n: usize,
    pub lowercase: bool,
    pub binary_presence: bool,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            max_n: 3,
            lowercase: true,
            binary_presence: true,
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.max_n) {
            return Err(Error::invalid(format!("max_n must be within 1..=3, got {}", self.max_n)));
        }
        Ok(())
    }
}

/// Every contiguous n-gram for n in `1..=max_n`, space-joined, in order of
/// appearance (unigrams first). Repeats are kept; see [`extract_ngrams`] for
/// the set form.
pub fn ngram_multiset(tokens: &[String], config: &NgramConfig) -> Vec<String> {
    let tokens: Vec<String> = if config.lowercase {
        tokens.iter().map(|t| t.to_lowercase()).collect()
    } else {
        tokens.to_vec()
    };
    let mut out = Vec::new();
    for n in 1..=config.max_n {
        if tokens.len() < n {
            break;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Distinct n-grams of `tokens`.
pub fn extract_ngrams(tokens: &[String], config: &NgramConfig) -> BTreeSet<String> {
    ngram_multiset(tokens, config).into_iter().collect()
}

/// Sorted `(index, value)` pairs with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Sorts and merges repeated indices by summing their values.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        if let Some((i, v)) = pairs.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value {v} at index {i}")));
        }
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        Ok(SparseVector { entries })
    }

    /// Binary indicator vector.
    pub fn indicator(indices: impl IntoIterator<Item = u32>) -> Self {
        let mut idx: Vec<u32> = indices.into_iter().collect();
        idx.sort_unstable();
        idx.dedup();
        SparseVector {
            entries: idx.into_iter().map(|i| (i, 1.0)).collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    /// Dot product with a dense vector; indices past its end contribute 0.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .filter_map(|&(i, v)| dense.get(i as usize).map(|w| w * v))
            .sum()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }
}

/// N-gram to feature index map. Indices are dense `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVocab {
    index: HashMap<String, u32>,
    terms: Vec<String>,
    frozen: bool,
}

impl FeatureVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a frozen vocabulary from terms listed in index order.
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("vocabulary term {t:?} repeated")));
            }
        }
        Ok(FeatureVocab {
            index,
            terms,
            frozen: true,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> Option<&str> {
        self.terms.get(index as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Index for `term`, adding it when the vocabulary is still open.
    pub fn intern(&mut self, term: &str) -> Result<u32> {
        if let Some(i) = self.index.get(term) {
            return Ok(*i);
        }
        if self.frozen {
            return Err(Error::invalid(format!("vocabulary is frozen; cannot add {term:?}")));
        }
        let i = self.terms.len() as u32;
        self.terms.push(term.to_string());
        self.index.insert(term.to_string(), i);
        Ok(i)
    }
}

/// Turns token lists into binary n-gram vectors.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub config: NgramConfig,
    pub vocab: FeatureVocab,
}

impl Featurizer {
    /// Learns a vocabulary from `docs` (terms numbered in sorted order, so the
    /// result does not depend on document order) and freezes it.
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a [String]>, config: NgramConfig) -> Result<Self> {
        config.validate()?;
        let mut all = BTreeSet::new();
        for d in docs {
            all.extend(extract_ngrams(d, &config));
        }
        let vocab = FeatureVocab::from_terms(all.into_iter().collect())?;
        Ok(Featurizer { config, vocab })
    }

    /// Vector over known features; unknown n-grams are ignored.
    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        if self.config.binary_presence {
            SparseVector::indicator(
                extract_ngrams(tokens, &self.config)
                    .iter()
                    .filter_map(|g| self.vocab.get(g)),
            )
        } else {
            let pairs = ngram_multiset(tokens, &self.config)
                .iter()
                .filter_map(|g| self.vocab.get(g))
                .map(|i| (i, 1.0))
                .collect();
            SparseVector::from_pairs(pairs).expect("counts are finite")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn hate_my_job_features() {
        let got = extract_ngrams(&toks("i really hate my job"), &NgramConfig::default());
        let want: BTreeSet<String> = [
            "i", "really", "hate", "my", "job", "i really", "really hate", "hate my", "my job",
            "i really hate", "really hate my", "hate my job",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(got, want);
        assert_eq!(got.len(), 12);
    }

    #[test]
    fn small_inputs() {
        assert!(extract_ngrams(&[], &NgramConfig::default()).is_empty());
        let got: Vec<String> = extract_ngrams(&toks("my job"), &NgramConfig::default()).into_iter().collect();
        assert_eq!(got, ["job", "my", "my job"]);
        let upper = extract_ngrams(&toks("My JOB"), &NgramConfig::default());
        assert!(upper.contains("my job"));
    }

    #[test]
    fn config_bounds() {
        let bad = NgramConfig {
            max_n: 4,
            ..NgramConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn vocab_freezing() {
        let mut v = FeatureVocab::new();
        assert_eq!(v.intern("a").unwrap(), 0);
        assert_eq!(v.intern("b").unwrap(), 1);
        assert_eq!(v.intern("a").unwrap(), 0);
        v.freeze();
        assert!(v.intern("c").is_err());
        assert_eq!(v.get("b"), Some(1));
        assert!(FeatureVocab::from_terms(vec!["x".into(), "x".into()]).is_err());
    }

    #[test]
    fn sparse_vector_rules() {
        let v = SparseVector::from_pairs(vec![(3, 1.0), (1, 2.0), (3, 0.5)]).unwrap();
        assert_eq!(v.entries(), &[(1, 2.0), (3, 1.5)]);
        assert_eq!(v.dot(&[0.0, 1.0, 0.0, 2.0]), 5.0);
        assert_eq!(v.dot(&[1.0, 1.0]), 2.0);
        assert!(SparseVector::from_pairs(vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn featurizer_ignores_unknown() {
        let docs = [toks("my job"), toks("good day")];
        let f = Featurizer::fit(docs.iter().map(|d| d.as_slice()), NgramConfig::default()).unwrap();
        assert_eq!(f.vocab.len(), 6);
        assert!(f.vocab.is_frozen());
        let x = f.transform(&toks("my job rocks"));
        assert_eq!(x.nnz(), 3);
        assert!(f.transform(&toks("nothing known")).is_empty());
    }

    proptest! {
        #[test]
        fn multiset_count_formula(n in 3usize..40) {
            let tokens: Vec<String> = (0..n).map(|i| format!("w{}", i % 5)).collect();
            let grams = ngram_multiset(&tokens, &NgramConfig::default());
            prop_assert_eq!(grams.len(), n + (n - 1) + (n - 2));
            prop_assert!(extract_ngrams(&tokens, &NgramConfig::default()).len() <= grams.len());
        }
    }
}

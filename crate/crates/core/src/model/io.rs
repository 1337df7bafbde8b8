//! Flat model file:
//!
//! ```text
//! WORKPULSE-MODEL 1
//! vocab_size <V>
//! C <c>
//! ratio <r>
//! seed <s>
//! max_epochs <n>
//! tolerance <t>
//! max_n <1..3>
//! lowercase <bool>
//! binary_presence <bool>
//! vocab
//! <index>\t<n-gram>          (V lines)
//! weights
//! <V little-endian f64 weights><1 little-endian f64 bias>
//! ```

use std::path::Path;
use std::sync::Arc;

use super::ngram::{FeatureVocab, Featurizer, NgramConfig};
use super::svm::{LinearModel, TrainConfig};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "WORKPULSE-MODEL";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &LinearModel) -> Vec<u8> {
    let cfg = &model.config;
    let ngram = &model.featurizer.config;
    let vocab = &model.featurizer.vocab;
    let mut out = format!(
        "{MODEL_MAGIC} {MODEL_VERSION}\nvocab_size {}\nC {}\nratio {}\nseed {}\nmax_epochs {}\ntolerance {}\nmax_n {}\nlowercase {}\nbinary_presence {}\nvocab\n",
        vocab.len(),
        cfg.c,
        cfg.class_weight_ratio,
        cfg.seed,
        cfg.max_epochs,
        cfg.tolerance,
        ngram.max_n,
        ngram.lowercase,
        ngram.binary_presence,
    )
    .into_bytes();
    for (i, term) in vocab.terms().iter().enumerate() {
        out.extend_from_slice(format!("{i}\t{term}\n").as_bytes());
    }
    out.extend_from_slice(b"weights\n");
    for w in &model.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&model.bias.to_le_bytes());
    out
}

struct Lines<'a> {
    buf: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        let rest = &self.buf[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| self.err("unexpected end of header"))?;
        self.pos += end + 1;
        self.line += 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| self.err("header is not UTF-8"))
    }

    fn field(&mut self, name: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        line.strip_prefix(name)
            .and_then(|v| v.strip_prefix(' '))
            .ok_or_else(|| self.err(&format!("expected `{name} <value>`, got {line:?}")))
    }

    fn parsed<T: std::str::FromStr>(&mut self, name: &str) -> Result<T> {
        let v = self.field(name)?;
        v.parse().map_err(|_| self.err(&format!("bad value {v:?} for {name}")))
    }

    fn err(&self, message: &str) -> Error {
        Error::Format {
            what: "model file",
            line: self.line,
            message: message.to_string(),
        }
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<LinearModel> {
    let mut r = Lines {
        buf: bytes,
        pos: 0,
        line: 0,
    };
    let version: u32 = r.parsed(MODEL_MAGIC)?;
    if version != MODEL_VERSION {
        return Err(r.err(&format!("unsupported format version {version}")));
    }
    let vocab_size: usize = r.parsed("vocab_size")?;
    let config = TrainConfig {
        c: r.parsed("C")?,
        class_weight_ratio: r.parsed("ratio")?,
        seed: r.parsed("seed")?,
        max_epochs: r.parsed("max_epochs")?,
        tolerance: r.parsed("tolerance")?,
    };
    let ngram = NgramConfig {
        max_n: r.parsed("max_n")?,
        lowercase: r.parsed("lowercase")?,
        binary_presence: r.parsed("binary_presence")?,
    };
    ngram.validate()?;
    if r.next_line()? != "vocab" {
        return Err(r.err("expected `vocab`"));
    }
    let mut terms = Vec::with_capacity(vocab_size);
    for i in 0..vocab_size {
        let line = r.next_line()?;
        let (idx, term) = line.split_once('\t').ok_or_else(|| r.err("expected `<index>\\t<term>`"))?;
        if idx.parse::<usize>().ok() != Some(i) {
            return Err(r.err(&format!("vocabulary index {idx:?} out of order, expected {i}")));
        }
        terms.push(term.to_string());
    }
    if r.next_line()? != "weights" {
        return Err(r.err("expected `weights`"));
    }
    let body = &bytes[r.pos..];
    if body.len() != (vocab_size + 1) * 8 {
        return Err(r.err(&format!(
            "weight block holds {} bytes, expected {}",
            body.len(),
            (vocab_size + 1) * 8
        )));
    }
    let mut floats = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let weights: Vec<f64> = floats.by_ref().take(vocab_size).collect();
    let bias = floats.next().expect("bias present");

    let featurizer = Featurizer {
        config: ngram,
        vocab: FeatureVocab::from_terms(terms)?,
    };
    LinearModel::new(weights, bias, Arc::new(featurizer), config)
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(weights: Vec<f64>, bias: f64) -> LinearModel {
        let terms = (0..weights.len()).map(|i| format!("w{i} x")).collect();
        let f = Featurizer {
            config: NgramConfig::default(),
            vocab: FeatureVocab::from_terms(terms).unwrap(),
        };
        LinearModel::new(weights, bias, Arc::new(f), TrainConfig { seed: 42, ..TrainConfig::default() }).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_model(&model(vec![1.5, -2.0], 0.25));
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("WORKPULSE-MODEL 1\nvocab_size 2\nC 0.1\nratio 1\nseed 42\n"));
        assert!(text.contains("vocab\n0\tw0 x\n1\tw1 x\nweights\n"));
        assert_eq!(&bytes[bytes.len() - 8..], &0.25f64.to_le_bytes());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let good = encode_model(&model(vec![1.0], 0.0));
        assert!(decode_model(&good[..good.len() - 1]).is_err());
        let mut bad_version = good.clone();
        bad_version[16] = b'9';
        assert!(decode_model(&bad_version).is_err());
        assert!(decode_model(b"").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(weights in proptest::collection::vec(-1e6f64..1e6, 0..50), bias in -10.0f64..10.0) {
            let m = model(weights, bias);
            let back = decode_model(&encode_model(&m)).unwrap();
            prop_assert_eq!(&back.weights, &m.weights);
            prop_assert_eq!(back.bias, m.bias);
            prop_assert_eq!(&back.featurizer.vocab, &m.featurizer.vocab);
            prop_assert_eq!(back.config, m.config);
        }
    }
}

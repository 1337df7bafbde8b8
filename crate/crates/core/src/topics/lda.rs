use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::UserDocument;
use crate::error::{Error, Result};

pub const LDA_MAGIC: &str = "WORKPULSE-LDA";
pub const LDA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Record the joint log-likelihood every this many sweeps; 0 disables.
    pub loglik_every: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::with_topics(20)
    }
}

impl LdaConfig {
    /// Conventional Gibbs defaults: alpha = 50/K, beta = 0.01, 1000 sweeps.
    pub fn with_topics(k: usize) -> Self {
        LdaConfig {
            num_topics: k,
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
            loglik_every: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics < 2 {
            return Err(Error::invalid("LDA needs at least 2 topics"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("alpha and beta must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub config: LdaConfig,
    /// Sorted vocabulary; word ids index into it.
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
    /// K × V
    pub topic_word: Vec<Vec<u32>>,
    pub topic_totals: Vec<u64>,
    /// D × K
    pub doc_topic: Vec<Vec<u32>>,
    /// Word id per token position, per document.
    pub words: Vec<Vec<u32>>,
    /// Topic per token position, per document.
    pub assignments: Vec<Vec<u16>>,
    /// `(sweep, log p(w, z))`
    pub loglik_trace: Vec<(usize, f64)>,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_index: usize,
    pub top_words: Vec<String>,
    pub token_share: f64,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.topic_word.len()
    }

    pub fn num_tokens(&self) -> u64 {
        self.topic_totals.iter().sum()
    }

    /// Smoothed topic-word distribution for one topic.
    pub fn phi_row(&self, k: usize) -> Vec<f64> {
        let v = self.vocab.len() as f64;
        let denom = self.topic_totals[k] as f64 + v * self.config.beta;
        self.topic_word[k]
            .iter()
            .map(|&c| (c as f64 + self.config.beta) / denom)
            .collect()
    }

    pub fn phi(&self) -> Vec<Vec<f64>> {
        (0..self.num_topics()).map(|k| self.phi_row(k)).collect()
    }

    pub fn theta(&self) -> Vec<Vec<f64>> {
        let k = self.num_topics() as f64;
        self.doc_topic
            .iter()
            .map(|row| {
                let n: u32 = row.iter().sum();
                let denom = n as f64 + k * self.config.alpha;
                row.iter().map(|&c| (c as f64 + self.config.alpha) / denom).collect()
            })
            .collect()
    }

    pub fn top_words(&self, topic: usize, k: usize) -> Result<Vec<String>> {
        if topic >= self.num_topics() {
            return Err(Error::invalid(format!(
                "topic index {topic} out of range 0..{}",
                self.num_topics()
            )));
        }
        // phi is monotone in the raw count within a row, so ranking by count
        // avoids float ties.
        let row = &self.topic_word[topic];
        let mut ids: Vec<usize> = (0..self.vocab.len()).collect();
        ids.sort_by(|&a, &b| row[b].cmp(&row[a]).then_with(|| self.vocab[a].cmp(&self.vocab[b])));
        Ok(ids.into_iter().take(k).map(|i| self.vocab[i].clone()).collect())
    }

    pub fn token_share(&self, topic: usize) -> f64 {
        let n = self.num_tokens();
        if n == 0 {
            0.0
        } else {
            self.topic_totals[topic] as f64 / n as f64
        }
    }

    pub fn summaries(&self, k: usize) -> Vec<TopicSummary> {
        (0..self.num_topics())
            .map(|t| TopicSummary {
                topic_index: t,
                top_words: self.top_words(t, k).expect("index in range"),
                token_share: self.token_share(t),
            })
            .collect()
    }

    /// Recounts both matrices from the assignments and compares.
    pub fn check_invariants(&self) -> Result<()> {
        let kk = self.num_topics();
        let mut tw = vec![vec![0u32; self.vocab.len()]; kk];
        let mut dt = vec![vec![0u32; kk]; self.words.len()];
        for (d, (ws, zs)) in self.words.iter().zip(&self.assignments).enumerate() {
            if ws.len() != zs.len() {
                return Err(Error::invalid(format!("document {d}: assignment length mismatch")));
            }
            for (&w, &z) in ws.iter().zip(zs) {
                tw[z as usize][w as usize] += 1;
                dt[d][z as usize] += 1;
            }
        }
        if tw != self.topic_word {
            return Err(Error::invalid("topic-word counts disagree with assignments"));
        }
        if dt != self.doc_topic {
            return Err(Error::invalid("document-topic counts disagree with assignments"));
        }
        for (k, row) in tw.iter().enumerate() {
            let s: u64 = row.iter().map(|&c| c as u64).sum();
            if s != self.topic_totals[k] {
                return Err(Error::invalid(format!("topic {k}: total {} != row sum {s}", self.topic_totals[k])));
            }
        }
        for (d, row) in dt.iter().enumerate() {
            if row.iter().sum::<u32>() as usize != self.words[d].len() {
                return Err(Error::invalid(format!("document {d}: topic counts do not sum to length")));
            }
        }
        Ok(())
    }

    /// Joint log-likelihood log p(w, z) under the symmetric priors.
    pub fn log_likelihood(&self) -> f64 {
        let kk = self.num_topics() as f64;
        let v = self.vocab.len() as f64;
        let (a, b) = (self.config.alpha, self.config.beta);
        let mut ll = kk * (ln_gamma(v * b) - v * ln_gamma(b));
        for (row, &n) in self.topic_word.iter().zip(&self.topic_totals) {
            ll += row.iter().map(|&c| ln_gamma(c as f64 + b)).sum::<f64>() - ln_gamma(n as f64 + v * b);
        }
        let d = self.doc_topic.len() as f64;
        ll += d * (ln_gamma(kk * a) - kk * ln_gamma(a));
        for row in &self.doc_topic {
            let n: u32 = row.iter().sum();
            ll += row.iter().map(|&c| ln_gamma(c as f64 + a)).sum::<f64>() - ln_gamma(n as f64 + kk * a);
        }
        ll
    }
}

pub fn fit_lda(docs: &[UserDocument], config: &LdaConfig) -> Result<TopicModel> {
    fit_lda_observed(docs, config, |_, _| {})
}

/// Like [`fit_lda`], calling `observer(sweep, &model)` after every sweep
/// (sweep numbering starts at 1).
pub fn fit_lda_observed(
    docs: &[UserDocument],
    config: &LdaConfig,
    mut observer: impl FnMut(usize, &TopicModel),
) -> Result<TopicModel> {
    config.validate()?;
    if config.num_topics > u16::MAX as usize {
        return Err(Error::invalid("too many topics"));
    }
    if docs.iter().all(UserDocument::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    let mut vocab: Vec<String> = docs.iter().flat_map(|d| d.tokens.iter().cloned()).collect();
    vocab.sort_unstable();
    vocab.dedup();
    if vocab.len() < config.num_topics {
        log::warn!(
            "LDA corpus has {} distinct tokens for {} topics",
            vocab.len(),
            config.num_topics
        );
    }
    let words: Vec<Vec<u32>> = docs
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .map(|t| vocab.binary_search(t).expect("token in vocab") as u32)
                .collect()
        })
        .collect();

    let kk = config.num_topics;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = TopicModel {
        config: *config,
        vocab,
        doc_ids: docs.iter().map(|d| d.account_id.clone()).collect(),
        topic_word: vec![vec![0; v]; kk],
        topic_totals: vec![0; kk],
        doc_topic: vec![vec![0; kk]; words.len()],
        assignments: Vec::with_capacity(words.len()),
        words,
        loglik_trace: Vec::new(),
        sweeps: 0,
    };
    for d in 0..model.words.len() {
        let zs: Vec<u16> = model.words[d]
            .iter()
            .map(|&w| {
                let z = rng.random_range(0..kk);
                model.topic_word[z][w as usize] += 1;
                model.topic_totals[z] += 1;
                model.doc_topic[d][z] += 1;
                z as u16
            })
            .collect();
        model.assignments.push(zs);
    }

    let (alpha, beta) = (config.alpha, config.beta);
    let vbeta = v as f64 * beta;
    let mut p = vec![0.0f64; kk];
    for sweep in 1..=config.iterations {
        for d in 0..model.words.len() {
            for i in 0..model.words[d].len() {
                let w = model.words[d][i] as usize;
                let old = model.assignments[d][i] as usize;
                model.topic_word[old][w] -= 1;
                model.topic_totals[old] -= 1;
                model.doc_topic[d][old] -= 1;

                let mut total = 0.0;
                for (k, pk) in p.iter_mut().enumerate() {
                    total += (model.doc_topic[d][k] as f64 + alpha) * (model.topic_word[k][w] as f64 + beta)
                        / (model.topic_totals[k] as f64 + vbeta);
                    *pk = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(kk - 1);

                model.topic_word[new][w] += 1;
                model.topic_totals[new] += 1;
                model.doc_topic[d][new] += 1;
                model.assignments[d][i] = new as u16;
            }
        }
        model.sweeps = sweep;
        if config.loglik_every > 0 && (sweep % config.loglik_every == 0 || sweep == config.iterations) {
            let ll = model.log_likelihood();
            model.loglik_trace.push((sweep, ll));
        }
        observer(sweep, &model);
    }
    Ok(model)
}

/// Versioned text dump holding both count matrices and the assignments.
pub fn write_topic_model(model: &TopicModel, mut out: impl Write) -> Result<()> {
    let io = |e| Error::io("<topic model>", e);
    let c = &model.config;
    writeln!(
        out,
        "{LDA_MAGIC} {LDA_VERSION}\nK {}\nV {}\nD {}\nalpha {}\nbeta {}\niterations {}\nseed {}\nsweeps {}",
        model.num_topics(),
        model.vocab.len(),
        model.doc_ids.len(),
        c.alpha,
        c.beta,
        c.iterations,
        c.seed,
        model.sweeps
    )
    .map_err(io)?;
    writeln!(out, "vocab").map_err(io)?;
    for t in &model.vocab {
        writeln!(out, "{t}").map_err(io)?;
    }
    writeln!(out, "topic_word").map_err(io)?;
    for row in &model.topic_word {
        writeln!(out, "{}", join(row)).map_err(io)?;
    }
    writeln!(out, "doc_topic").map_err(io)?;
    for (id, row) in model.doc_ids.iter().zip(&model.doc_topic) {
        writeln!(out, "{id}\t{}", join(row)).map_err(io)?;
    }
    writeln!(out, "assignments").map_err(io)?;
    for (ws, zs) in model.words.iter().zip(&model.assignments) {
        let pairs: Vec<String> = ws.iter().zip(zs).map(|(w, z)| format!("{w}:{z}")).collect();
        writeln!(out, "{}", pairs.join(" ")).map_err(io)?;
    }
    Ok(())
}

fn join<T: ToString>(row: &[T]) -> String {
    row.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn read_topic_model(input: impl BufRead) -> Result<TopicModel> {
    let mut lines = input.lines().enumerate();
    let mut line_no = 0;
    let mut next = |line_no: &mut usize| -> Result<String> {
        match lines.next() {
            Some((i, l)) => {
                *line_no = i + 1;
                l.map_err(|e| Error::io("<topic model>", e))
            }
            None => Err(Error::Format {
                what: "topic model",
                line: *line_no,
                message: "unexpected end of file".into(),
            }),
        }
    };
    let bad = |line: usize, message: String| Error::Format {
        what: "topic model",
        line,
        message,
    };
    macro_rules! field {
        ($name:literal, $t:ty) => {{
            let l = next(&mut line_no)?;
            l.strip_prefix(concat!($name, " "))
                .and_then(|v| v.parse::<$t>().ok())
                .ok_or_else(|| bad(line_no, format!("expected `{} <value>`, got {l:?}", $name)))?
        }};
    }
    macro_rules! marker {
        ($name:literal) => {{
            let l = next(&mut line_no)?;
            if l != $name {
                return Err(bad(line_no, format!("expected `{}`", $name)));
            }
        }};
    }
    let version: u32 = field!("WORKPULSE-LDA", u32);
    if version != LDA_VERSION {
        return Err(bad(line_no, format!("unsupported version {version}")));
    }
    let kk = field!("K", usize);
    let v = field!("V", usize);
    let d = field!("D", usize);
    let alpha = field!("alpha", f64);
    let beta = field!("beta", f64);
    let iterations = field!("iterations", usize);
    let seed = field!("seed", u64);
    let sweeps = field!("sweeps", usize);
    marker!("vocab");
    let vocab = (0..v).map(|_| next(&mut line_no)).collect::<Result<Vec<_>>>()?;
    let parse_row = |l: &str, n: usize, line: usize| -> Result<Vec<u32>> {
        let row = l
            .split_whitespace()
            .map(|x| x.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(line, e.to_string()))?;
        if row.len() != n {
            return Err(bad(line, format!("expected {n} counts, got {}", row.len())));
        }
        Ok(row)
    };
    marker!("topic_word");
    let mut topic_word = Vec::with_capacity(kk);
    for _ in 0..kk {
        let l = next(&mut line_no)?;
        topic_word.push(parse_row(&l, v, line_no)?);
    }
    marker!("doc_topic");
    let mut doc_ids = Vec::with_capacity(d);
    let mut doc_topic = Vec::with_capacity(d);
    for _ in 0..d {
        let l = next(&mut line_no)?;
        let (id, rest) = l
            .split_once('\t')
            .ok_or_else(|| bad(line_no, "expected `<account>\\t<counts>`".into()))?;
        doc_ids.push(id.to_string());
        doc_topic.push(parse_row(rest, kk, line_no)?);
    }
    marker!("assignments");
    let mut words = Vec::with_capacity(d);
    let mut assignments = Vec::with_capacity(d);
    for _ in 0..d {
        let l = next(&mut line_no)?;
        let mut ws = Vec::new();
        let mut zs = Vec::new();
        for pair in l.split_whitespace() {
            let parsed = pair
                .split_once(':')
                .and_then(|(w, z)| Some((w.parse::<u32>().ok()?, z.parse::<u16>().ok()?)));
            match parsed {
                Some((w, z)) if (w as usize) < v && (z as usize) < kk => {
                    ws.push(w);
                    zs.push(z);
                }
                _ => return Err(bad(line_no, format!("bad assignment {pair:?}"))),
            }
        }
        words.push(ws);
        assignments.push(zs);
    }
    let topic_totals = topic_word.iter().map(|r| r.iter().map(|&c| c as u64).sum()).collect();
    let model = TopicModel {
        config: LdaConfig {
            num_topics: kk,
            alpha,
            beta,
            iterations,
            seed,
            loglik_every: 0,
        },
        vocab,
        doc_ids,
        topic_word,
        topic_totals,
        doc_topic,
        words,
        assignments,
        loglik_trace: Vec::new(),
        sweeps,
    };
    model.check_invariants()?;
    Ok(model)
}

impl TopicModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        write_topic_model(self, &mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_topic_model(std::io::BufReader::new(f))
    }
}

//! Class-weighted linear SVM trained by dual coordinate descent.
//!
//! The bias is handled as one more weight on a constant feature of value 1,
//! so the optimized objective is
//!
//! ```text
//! 1/2 (|w|^2 + b^2) + C * sum_i cw(y_i) * max(0, 1 - y_i (w.x_i + b))
//! ```
//!
//! with `cw(+) = class_weight_ratio` and `cw(-) = 1`. Each epoch visits the
//! examples in a seeded random order. Dual updates do not guarantee a
//! decreasing primal value, so the solver keeps the best primal iterate seen
//! and returns it; the per-epoch trace reports that incumbent.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ngram::{Featurizer, SparseVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Penalty on the hinge term.
    pub c: f64,
    /// Positive-class weight divided by negative-class weight.
    pub class_weight_ratio: f64,
    pub max_epochs: usize,
    /// Relative change in the primal objective below which training stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 0.1,
            class_weight_ratio: 1.0,
            max_epochs: 1000,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.class_weight_ratio > 0.0 && self.class_weight_ratio.is_finite()) {
            return Err(Error::invalid(format!(
                "class weight ratio must be positive, got {}",
                self.class_weight_ratio
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        Ok(())
    }

    fn upper_bound(&self, positive: bool) -> f64 {
        if positive {
            self.c * self.class_weight_ratio
        } else {
            self.c
        }
    }
}

/// Signed geometric distance to the separating hyperplane.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ConfidenceScore(pub f64);

impl ConfidenceScore {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Predicted job-related. A score of exactly zero counts as negative.
    pub fn is_positive(self) -> bool {
        self.0 > 0.0
    }
}

/// Optimizer output before it is tied to a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Best primal objective after each epoch (non-increasing).
    pub objective_trace: Vec<f64>,
    /// Primal objective of the raw dual iterate after each epoch.
    pub iterate_trace: Vec<f64>,
    pub epochs: usize,
}

pub fn primal_objective(examples: &[(SparseVector, bool)], weights: &[f64], bias: f64, config: &TrainConfig) -> f64 {
    let reg = 0.5 * (weights.iter().map(|w| w * w).sum::<f64>() + bias * bias);
    let loss: f64 = examples
        .iter()
        .map(|(x, y)| {
            let s = if *y { 1.0 } else { -1.0 };
            config.upper_bound(*y) * (1.0 - s * (x.dot(weights) + bias)).max(0.0)
        })
        .sum();
    reg + loss
}

/// Solves the weighted hinge problem over `dim` features.
pub fn fit_hinge(examples: &[(SparseVector, bool)], dim: usize, config: &TrainConfig) -> Result<HingeSolution> {
    config.validate()?;
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::SingleClass);
    }
    if let Some(max) = examples.iter().filter_map(|(x, _)| x.max_index()).max() {
        if max as usize >= dim {
            return Err(Error::invalid(format!("feature index {max} outside dimension {dim}")));
        }
    }

    let n = examples.len();
    let q_diag: Vec<f64> = examples.iter().map(|(x, _)| x.squared_norm() + 1.0).collect();
    let sign: Vec<f64> = examples.iter().map(|(_, y)| if *y { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = examples.iter().map(|(_, y)| config.upper_bound(*y)).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = (w.clone(), b, primal_objective(examples, &w, b, config));
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut objective_trace = Vec::new();
    let mut iterate_trace = Vec::new();
    let mut previous = best.2;

    let mut epochs = 0;
    while epochs < config.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let (x, _) = &examples[i];
            let g = sign[i] * (x.dot(&w) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * sign[i];
                if step != 0.0 {
                    for &(j, v) in x.entries() {
                        w[j as usize] += step * v;
                    }
                    b += step;
                }
            }
        }

        let current = primal_objective(examples, &w, b, config);
        iterate_trace.push(current);
        if current < best.2 {
            best = (w.clone(), b, current);
        }
        objective_trace.push(best.2);

        let kkt_gap = pg_max - pg_min;
        let change = (previous - current).abs() / previous.abs().max(1.0);
        previous = current;
        if kkt_gap <= 1e-9 || change < config.tolerance {
            break;
        }
    }

    Ok(HingeSolution {
        weights: best.0,
        bias: best.1,
        objective_trace,
        iterate_trace,
        epochs,
    })
}

/// Trained hyperplane plus the featurizer it was trained against.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub featurizer: Arc<Featurizer>,
    pub config: TrainConfig,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64, featurizer: Arc<Featurizer>, config: TrainConfig) -> Result<Self> {
        if weights.len() != featurizer.vocab.len() {
            return Err(Error::invalid(format!(
                "{} weights for a vocabulary of {}",
                weights.len(),
                featurizer.vocab.len()
            )));
        }
        Ok(LinearModel {
            weights,
            bias,
            featurizer,
            config,
        })
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Raw `w.x + b`.
    pub fn decision_value(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn score_tokens(&self, tokens: &[String]) -> Result<ConfidenceScore> {
        decision_score(self, &self.featurizer.transform(tokens))
    }
}

/// Trains on examples already vectorized by `featurizer`.
pub fn train_linear_svm(
    examples: &[(SparseVector, bool)],
    featurizer: Arc<Featurizer>,
    config: &TrainConfig,
) -> Result<LinearModel> {
    let sol = fit_hinge(examples, featurizer.vocab.len(), config)?;
    LinearModel::new(sol.weights, sol.bias, featurizer, *config)
}

/// `(w.x + b) / |w|`. Features outside the model's dimension contribute 0.
pub fn decision_score(model: &LinearModel, x: &SparseVector) -> Result<ConfidenceScore> {
    let norm = model.weight_norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateModel);
    }
    Ok(ConfidenceScore(model.decision_value(x) / norm))
}

/// `(term, weight)` pairs.
pub type WeightedTerms = Vec<(String, f64)>;

/// The `k` largest positive and `k` most negative weights, each list sorted
/// by magnitude (ties by term).
pub fn top_features(model: &LinearModel, k: usize) -> (WeightedTerms, WeightedTerms) {
    let vocab = &model.featurizer.vocab;
    let mut pos: Vec<(String, f64)> = Vec::new();
    let mut neg: Vec<(String, f64)> = Vec::new();
    for (i, &w) in model.weights.iter().enumerate() {
        let term = vocab.term(i as u32).unwrap_or_default().to_string();
        if w > 0.0 {
            pos.push((term, w));
        } else if w < 0.0 {
            neg.push((term, w));
        }
    }
    let by_magnitude = |a: &(String, f64), b: &(String, f64)| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0));
    pos.sort_by(by_magnitude);
    neg.sort_by(by_magnitude);
    pos.truncate(k);
    neg.truncate(k);
    (pos, neg)
}

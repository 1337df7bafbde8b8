use serde::{Deserialize, Serialize};

use super::ngram::SparseVector;
use super::svm::{decision_score, LinearModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positive_metrics(&self) -> ClassMetrics {
        ClassMetrics::from_counts(self.tp, self.fp, self.fn_)
    }

    pub fn negative_metrics(&self) -> ClassMetrics {
        ClassMetrics::from_counts(self.tn, self.fn_, self.fp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    /// Undefined ratios (empty denominators) are reported as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics { precision, recall, f1 }
    }
}

/// Metrics with job-related as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::invalid("prediction and label counts differ"));
        }
        if predicted.is_empty() {
            return Err(Error::invalid("evaluation set is empty"));
        }
        let mut confusion = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            confusion.record(p, a);
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Confusion) -> Self {
        EvalReport {
            positive: confusion.positive_metrics(),
            negative: confusion.negative_metrics(),
            confusion,
        }
    }
}

pub fn evaluate(model: &LinearModel, heldout: &[(SparseVector, bool)]) -> Result<EvalReport> {
    let predicted = heldout
        .iter()
        .map(|(x, _)| decision_score(model, x).map(|s| s.is_positive()))
        .collect::<Result<Vec<bool>>>()?;
    let actual: Vec<bool> = heldout.iter().map(|(_, y)| *y).collect();
    EvalReport::from_predictions(&predicted, &actual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let r = EvalReport::from_predictions(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!(r.positive, ClassMetrics { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(r.negative.f1, 1.0);
    }

    #[test]
    fn all_positive_on_balanced_set() {
        let r = EvalReport::from_predictions(&[true; 4], &[true, true, false, false]).unwrap();
        assert_eq!(r.positive.recall, 1.0);
        assert_eq!(r.positive.precision, 0.5);
        assert_eq!(r.negative.recall, 0.0);
    }

    #[test]
    fn reported_operating_point_arithmetic() {
        let m = ClassMetrics::from_counts(186, 4, 14);
        assert!((m.precision - 186.0 / 190.0).abs() < 1e-15);
        assert!((m.precision - 0.979).abs() < 5e-4);
        assert!((m.recall - 0.93).abs() < 1e-12);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(EvalReport::from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn confusion_serializes_fn_key() {
        let json = serde_json::to_value(Confusion { tp: 1, fp: 2, fn_: 3, tn: 4 }).unwrap();
        assert_eq!(json["fn"], 3);
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500) {
            let m = ClassMetrics::from_counts(tp, fp, fn_);
            prop_assert!((0.0..=1.0).contains(&m.precision));
            prop_assert!((0.0..=1.0).contains(&m.recall));
            prop_assert!((0.0..=1.0).contains(&m.f1));
            if m.precision + m.recall > 0.0 {
                let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f1 - h).abs() <= 1e-12);
            }
        }
    }
}

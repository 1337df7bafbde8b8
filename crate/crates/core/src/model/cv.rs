use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::Confusion;
use super::ngram::{Featurizer, SparseVector};
use super::svm::{fit_hinge, train_linear_svm, LinearModel, TrainConfig};
use crate::error::{Error, Result};

/// One (config, fold) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    #[serde(rename = "C")]
    pub c: f64,
    pub ratio: f64,
    pub fold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub c: f64,
    pub ratio: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub best: TrainConfig,
    pub model: LinearModel,
    /// Per-fold rows ordered by (C, ratio, fold) in grid order.
    pub table: Vec<CvRow>,
    /// Per-config means in grid order.
    pub cells: Vec<CvCell>,
}

/// Default grids when none are given.
pub const DEFAULT_C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
pub const DEFAULT_RATIO_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Fold number for each example. Each class is shuffled under `seed` and dealt
/// round-robin, continuing the rotation from positives into negatives, so fold
/// sizes differ by at most one and class shares stay balanced.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0; labels.len()];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        folds[i] = slot % k;
    }
    folds
}

/// Positive-class precision, recall and F1 of a config trained on all folds
/// but `fold` and tested on `fold`. A train or test split that lacks a class
/// scores 0.
pub fn evaluate_fold(
    examples: &[(SparseVector, bool)],
    folds: &[usize],
    fold: usize,
    dim: usize,
    config: &TrainConfig,
) -> Result<(f64, f64, f64)> {
    let train: Vec<(SparseVector, bool)> = examples
        .iter()
        .zip(folds)
        .filter(|(_, &f)| f != fold)
        .map(|(e, _)| e.clone())
        .collect();
    let test: Vec<&(SparseVector, bool)> = examples.iter().zip(folds).filter(|(_, &f)| f == fold).map(|(e, _)| e).collect();
    let test_classes = (test.iter().any(|(_, y)| *y), test.iter().any(|(_, y)| !*y));
    if test_classes != (true, true) {
        log::warn!("fold {fold} holds a single class; its F1 counts as 0");
        return Ok((0.0, 0.0, 0.0));
    }
    let sol = match fit_hinge(&train, dim, config) {
        Ok(s) => s,
        Err(Error::SingleClass) => {
            log::warn!("training split for fold {fold} holds a single class; its F1 counts as 0");
            return Ok((0.0, 0.0, 0.0));
        }
        Err(e) => return Err(e),
    };
    let mut confusion = Confusion::default();
    for (x, y) in test {
        let predicted = x.dot(&sol.weights) + sol.bias > 0.0;
        confusion.record(predicted, *y);
    }
    let m = confusion.positive_metrics();
    Ok((m.precision, m.recall, m.f1))
}

/// Stratified k-fold grid search over `(C, ratio)` maximizing mean positive F1.
/// Ties go to the smaller C, then to the ratio closest to 1 on a log scale.
/// The winner is retrained on every example.
pub fn grid_search_cv(
    examples: &[(SparseVector, bool)],
    featurizer: Arc<Featurizer>,
    c_grid: &[f64],
    ratio_grid: &[f64],
    k: usize,
    base: &TrainConfig,
) -> Result<GridSearch> {
    if c_grid.is_empty() || ratio_grid.is_empty() {
        return Err(Error::invalid("grids must be non-empty"));
    }
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if examples.len() < k {
        return Err(Error::invalid(format!("{} examples cannot fill {k} folds", examples.len())));
    }
    let labels: Vec<bool> = examples.iter().map(|(_, y)| *y).collect();
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::SingleClass);
    }
    let folds = stratified_folds(&labels, k, base.seed);
    let dim = featurizer.vocab.len();

    let configs: Vec<TrainConfig> = c_grid
        .iter()
        .flat_map(|&c| {
            ratio_grid.iter().map(move |&r| TrainConfig {
                c,
                class_weight_ratio: r,
                ..*base
            })
        })
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }

    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|ci| (0..k).map(move |f| (ci, f))).collect();
    let results: Vec<Result<CvRow>> = jobs
        .par_iter()
        .map(|&(ci, fold)| {
            let cfg = &configs[ci];
            let (precision, recall, f1) = evaluate_fold(examples, &folds, fold, dim, cfg)?;
            Ok(CvRow {
                c: cfg.c,
                ratio: cfg.class_weight_ratio,
                fold,
                precision,
                recall,
                f1,
            })
        })
        .collect();
    let table: Vec<CvRow> = results.into_iter().collect::<Result<_>>()?;

    let cells: Vec<CvCell> = table
        .chunks(k)
        .map(|rows| {
            let mean = |f: fn(&CvRow) -> f64| rows.iter().map(f).sum::<f64>() / k as f64;
            CvCell {
                c: rows[0].c,
                ratio: rows[0].ratio,
                mean_precision: mean(|r| r.precision),
                mean_recall: mean(|r| r.recall),
                mean_f1: mean(|r| r.f1),
            }
        })
        .collect();

    let best_index = select_best(&cells);
    let best = configs[best_index];
    let model = train_linear_svm(examples, featurizer, &best)?;
    Ok(GridSearch {
        best,
        model,
        table,
        cells,
    })
}

fn select_best(cells: &[CvCell]) -> usize {
    let mut best = 0;
    for (i, cell) in cells.iter().enumerate().skip(1) {
        let cur = &cells[best];
        let better = cell.mean_f1 > cur.mean_f1
            || (cell.mean_f1 == cur.mean_f1
                && (cell.c < cur.c
                    || (cell.c == cur.c && cell.ratio.ln().abs() < cur.ratio.ln().abs())));
        if better {
            best = i;
        }
    }
    best
}

/// CSV with columns `C,ratio,fold,precision,recall,f1`.
pub fn write_cv_table<W: Write>(rows: &[CvRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["C", "ratio", "fold", "precision", "recall", "f1"])?;
    for r in rows {
        w.write_record([
            r.c.to_string(),
            r.ratio.to_string(),
            r.fold.to_string(),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.f1),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<bool> = (0..100).map(|i| i % 10 == 0).collect();
        let folds = stratified_folds(&labels, 10, 3);
        for f in 0..10 {
            let members: Vec<usize> = (0..100).filter(|&i| folds[i] == f).collect();
            assert_eq!(members.len(), 10);
            assert_eq!(members.iter().filter(|&&i| labels[i]).count(), 1);
        }
        assert_eq!(folds, stratified_folds(&labels, 10, 3));
    }

    #[test]
    fn tie_break_prefers_small_c_then_ratio_near_one() {
        let cell = |c, ratio, f1| CvCell {
            c,
            ratio,
            mean_precision: 0.0,
            mean_recall: 0.0,
            mean_f1: f1,
        };
        let cells = vec![cell(1.0, 1.0, 0.9), cell(0.1, 4.0, 0.9), cell(0.1, 0.5, 0.9), cell(0.1, 1.0, 0.8)];
        assert_eq!(select_best(&cells), 2);
        let cells = vec![cell(0.1, 1.0, 0.5), cell(10.0, 1.0, 0.7)];
        assert_eq!(select_best(&cells), 1);
    }

    #[test]
    fn cv_table_csv_header() {
        let mut buf = Vec::new();
        write_cv_table(
            &[CvRow {
                c: 0.1,
                ratio: 1.0,
                fold: 0,
                precision: 1.0,
                recall: 0.5,
                f1: 2.0 / 3.0,
            }],
            &mut buf,
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "C,ratio,fold,precision,recall,f1\n0.1,1,0,1.000000,0.500000,0.666667\n");
    }
}

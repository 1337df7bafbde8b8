use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Answer, Batch, LabelRecord};
use crate::error::{Error, Result};

/// Fleiss' kappa over per-item category counts, each row summing to `raters`.
///
/// When chance agreement is already perfect (every rating in one category)
/// the statistic is undefined; it is reported as 1.0.
pub fn fleiss_kappa(counts: &[Vec<u32>], raters: usize) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::invalid("fleiss kappa needs at least two items"));
    }
    if raters < 2 {
        return Err(Error::invalid("fleiss kappa needs at least two raters per item"));
    }
    let categories = counts[0].len();
    let n = raters as f64;
    let mut column_totals = vec![0.0; categories];
    let mut p_bar = 0.0;
    for (i, row) in counts.iter().enumerate() {
        if row.len() != categories {
            return Err(Error::invalid(format!("item {i} has {} categories, expected {categories}", row.len())));
        }
        let sum: u32 = row.iter().sum();
        if sum as usize != raters {
            return Err(Error::invalid(format!("item {i} has {sum} ratings, expected {raters}")));
        }
        let agree: f64 = row.iter().map(|&c| f64::from(c) * (f64::from(c) - 1.0)).sum();
        p_bar += agree / (n * (n - 1.0));
        for (t, &c) in column_totals.iter_mut().zip(row) {
            *t += f64::from(c);
        }
    }
    let items = counts.len() as f64;
    p_bar /= items;
    let p_e: f64 = column_totals.iter().map(|t| (t / (items * n)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Binary convenience form: `(yes, no)` per item.
pub fn fleiss_kappa_yes_no(votes: &[(u32, u32)], raters: usize) -> Result<f64> {
    let rows: Vec<Vec<u32>> = votes.iter().map(|&(y, n)| vec![y, n]).collect();
    fleiss_kappa(&rows, raters)
}

/// Krippendorff's alpha for nominal data over an item x coder grid.
/// `None` cells are missing and never paired.
pub fn krippendorff_alpha<C: Ord + Clone>(grid: &[Vec<Option<C>>]) -> Result<f64> {
    // coincidence matrix, keyed by category pair
    let mut coincidences: BTreeMap<(C, C), f64> = BTreeMap::new();
    let mut pairable_units = 0usize;
    for unit in grid {
        let mut tally: BTreeMap<&C, f64> = BTreeMap::new();
        for v in unit.iter().flatten() {
            *tally.entry(v).or_default() += 1.0;
        }
        let m: f64 = tally.values().sum();
        if m < 2.0 {
            continue;
        }
        pairable_units += 1;
        for (&c, &nc) in &tally {
            for (&k, &nk) in &tally {
                let pairs = if c == k { nc * (nc - 1.0) } else { nc * nk };
                *coincidences.entry((c.clone(), k.clone())).or_default() += pairs / (m - 1.0);
            }
        }
    }
    if pairable_units == 0 {
        return Err(Error::InsufficientPairableData);
    }

    let mut marginals: BTreeMap<&C, f64> = BTreeMap::new();
    let mut observed_off = 0.0;
    for ((c, k), &o) in &coincidences {
        *marginals.entry(c).or_default() += o;
        if c != k {
            observed_off += o;
        }
    }
    let n: f64 = marginals.values().sum();
    let total_sq: f64 = marginals.values().map(|v| v * v).sum();
    let expected_off = n * n - total_sq;
    let d_o = observed_off / n;
    let d_e = expected_off / (n * (n - 1.0));
    if d_e.abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok(1.0 - d_o / d_e)
}

/// Share of a batch's duplicate pairs that one worker answered identically.
/// `labels` must all come from the same worker.
pub fn worker_consistency(labels: &[LabelRecord], batch: &Batch) -> Result<f64> {
    let mut by_position: HashMap<usize, Answer> = HashMap::new();
    let mut worker: Option<&str> = None;
    for rec in labels.iter().filter(|r| r.batch_id == batch.id) {
        match worker {
            None => worker = Some(&rec.worker_id),
            Some(w) if w != rec.worker_id => {
                return Err(Error::invalid(format!(
                    "labels for batch {} mix workers {w} and {}",
                    batch.id, rec.worker_id
                )))
            }
            _ => {}
        }
        if rec.position < batch.len() {
            by_position.insert(rec.position, rec.answer);
        }
    }
    if by_position.len() != batch.len() {
        return Err(Error::IncompleteBatch {
            batch_id: batch.id.clone(),
            worker_id: worker.unwrap_or("").to_string(),
            answered: by_position.len(),
            expected: batch.len(),
        });
    }
    Ok(consistency_of(&by_position, &batch.dup_pairs))
}

pub(crate) fn consistency_of(answers: &HashMap<usize, Answer>, dup_pairs: &[(usize, usize)]) -> f64 {
    if dup_pairs.is_empty() {
        return 1.0;
    }
    let same = dup_pairs
        .iter()
        .filter(|(a, b)| answers.get(a) == answers.get(b))
        .count();
    same as f64 / dup_pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub fleiss_kappa: f64,
    pub krippendorff_alpha: f64,
    pub per_worker_consistency: BTreeMap<String, f64>,
}

/// Counted answers per tweet and worker; the first position wins when a
/// tweet appears twice in the same batch.
pub(crate) fn counted_answers(labels: &[LabelRecord]) -> BTreeMap<&str, BTreeMap<&str, Answer>> {
    let mut first: BTreeMap<(&str, &str, &str), (usize, Answer)> = BTreeMap::new();
    for r in labels {
        let key = (r.tweet_id.as_str(), r.worker_id.as_str(), r.batch_id.as_str());
        match first.get(&key) {
            Some(&(pos, _)) if pos <= r.position => {}
            _ => {
                first.insert(key, (r.position, r.answer));
            }
        }
    }
    let mut out: BTreeMap<&str, BTreeMap<&str, Answer>> = BTreeMap::new();
    for ((tweet, worker, _batch), (_, answer)) in first {
        // a worker seen in two batches for the same tweet keeps the first batch
        out.entry(tweet).or_default().entry(worker).or_insert(answer);
    }
    out
}

/// Agreement over all items that carry exactly `raters` counted answers.
pub fn agreement_pooled(labels: &[LabelRecord], batches: &[Batch], raters: usize) -> Result<AgreementReport> {
    let answers = counted_answers(labels);
    let full: Vec<_> = answers.values().filter(|w| w.len() == raters).collect();
    let votes: Vec<(u32, u32)> = full
        .iter()
        .map(|w| {
            let yes = w.values().filter(|a| **a == Answer::Y).count() as u32;
            (yes, w.len() as u32 - yes)
        })
        .collect();
    let fleiss = fleiss_kappa_yes_no(&votes, raters)?;

    let mut workers: Vec<&str> = full.iter().flat_map(|w| w.keys().copied()).collect();
    workers.sort_unstable();
    workers.dedup();
    let grid: Vec<Vec<Option<Answer>>> = full
        .iter()
        .map(|w| workers.iter().map(|id| w.get(id).copied()).collect())
        .collect();
    let alpha = krippendorff_alpha(&grid)?;

    Ok(AgreementReport {
        fleiss_kappa: fleiss,
        krippendorff_alpha: alpha,
        per_worker_consistency: per_worker_consistency(labels, batches),
    })
}

/// One report per batch, restricted to that batch's labels.
pub fn agreement_per_batch(
    labels: &[LabelRecord],
    batches: &[Batch],
    raters: usize,
) -> BTreeMap<String, Result<AgreementReport>> {
    batches
        .iter()
        .map(|b| {
            let subset: Vec<LabelRecord> = labels.iter().filter(|r| r.batch_id == b.id).cloned().collect();
            (b.id.clone(), agreement_pooled(&subset, std::slice::from_ref(b), raters))
        })
        .collect()
}

/// Mean duplicate consistency of each worker over the batches they completed.
pub fn per_worker_consistency(labels: &[LabelRecord], batches: &[Batch]) -> BTreeMap<String, f64> {
    let mut grouped: BTreeMap<(&str, &str), Vec<LabelRecord>> = BTreeMap::new();
    for r in labels {
        grouped
            .entry((r.worker_id.as_str(), r.batch_id.as_str()))
            .or_default()
            .push(r.clone());
    }
    let by_id: HashMap<&str, &Batch> = batches.iter().map(|b| (b.id.as_str(), b)).collect();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((worker, batch_id), recs) in grouped {
        let Some(batch) = by_id.get(batch_id) else { continue };
        if let Ok(c) = worker_consistency(&recs, batch) {
            let e = sums.entry(worker.to_string()).or_default();
            e.0 += c;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(w, (s, n))| (w, s / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn fleiss_examples() {
        assert_eq!(fleiss_kappa_yes_no(&[(5, 0), (5, 0)], 5).unwrap(), 1.0);
        assert_eq!(fleiss_kappa_yes_no(&[(0, 5), (0, 5)], 5).unwrap(), 1.0);
        // P-bar = (1 + 0.4)/2 = 0.7, Pe = 0.8^2 + 0.2^2 = 0.68
        let k = fleiss_kappa_yes_no(&[(5, 0), (3, 2)], 5).unwrap();
        assert!((k - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn fleiss_rejects_bad_rows() {
        assert!(fleiss_kappa_yes_no(&[(5, 0)], 5).is_err());
        assert!(fleiss_kappa_yes_no(&[(5, 0), (3, 1)], 5).is_err());
    }

    #[test]
    fn fleiss_multi_category_textbook() {
        // Fleiss (1971)-style check computed by hand:
        // rows (3,0,0), (0,3,0): P_i = 1 each; p = (1/2, 1/2, 0) -> Pe = 0.5; kappa = 1
        assert!((fleiss_kappa(&[vec![3, 0, 0], vec![0, 3, 0]], 3).unwrap() - 1.0).abs() < 1e-12);
        // rows (2,1), (1,2): P_i = 1/3; Pe = 0.5 -> kappa = -1/3
        let k = fleiss_kappa(&[vec![2, 1], vec![1, 2]], 3).unwrap();
        assert!((k + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_examples() {
        use Answer::*;
        let same = vec![vec![Some(Y), Some(Y)], vec![Some(N), Some(N)]];
        assert_eq!(krippendorff_alpha(&same).unwrap(), 1.0);
        let half = vec![vec![Some(Y), Some(Y)], vec![Some(Y), Some(N)]];
        assert!(krippendorff_alpha(&half).unwrap().abs() < 1e-12);
        let crossed = vec![vec![Some(Y), Some(N)], vec![Some(N), Some(Y)]];
        let a = krippendorff_alpha(&crossed).unwrap();
        assert!((a + 0.5).abs() < 1e-12);
    }

    #[test]
    fn alpha_edge_cases() {
        let lonely: Vec<Vec<Option<u8>>> = vec![vec![Some(1), None], vec![None, None]];
        assert!(matches!(krippendorff_alpha(&lonely), Err(Error::InsufficientPairableData)));
        let single_category = vec![vec![Some(1), Some(1), None], vec![Some(1), None, Some(1)]];
        assert_eq!(krippendorff_alpha(&single_category).unwrap(), 1.0);
    }

    #[test]
    fn alpha_with_missing_cells_matches_hand_count() {
        // units: (a,a,-), (a,b,b): m = 2, 3
        // o_aa = 2/1 = 2; unit2: o_ab = 1*2/2 = 1, o_ba = 1, o_bb = 2*1/2 = 1
        // n_a = 3, n_b = 2, n = 5; D_o = 2/5; D_e = 2*3*2/(5*4) = 0.6
        let grid = vec![vec![Some('a'), Some('a'), None], vec![Some('a'), Some('b'), Some('b')]];
        let alpha = krippendorff_alpha(&grid).unwrap();
        assert!((alpha - (1.0 - 0.4 / 0.6)).abs() < 1e-12);
    }

    fn rec(worker: &str, pos: usize, tweet: &str, answer: Answer) -> LabelRecord {
        LabelRecord {
            batch_id: "b".into(),
            worker_id: worker.into(),
            position: pos,
            tweet_id: tweet.into(),
            answer,
            submitted_at: Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    fn five_dup_batch() -> Batch {
        // items: t0..t4 then repeats of t0..t4
        let mut items: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
        items.extend(items.clone());
        Batch {
            id: "b".into(),
            items,
            dup_pairs: (0..5).map(|i| (i, i + 5)).collect(),
        }
    }

    #[test]
    fn consistency_ratios() {
        use Answer::*;
        let b = five_dup_batch();
        let all_same: Vec<_> = (0..10).map(|p| rec("w", p, &b.items[p], Y)).collect();
        assert_eq!(worker_consistency(&all_same, &b).unwrap(), 1.0);
        let mut four = all_same.clone();
        four[9].answer = N;
        assert!((worker_consistency(&four, &b).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            worker_consistency(&four[..9], &b),
            Err(Error::IncompleteBatch { answered: 9, .. })
        ));

        let plain = Batch {
            id: "b".into(),
            items: vec!["x".into()],
            dup_pairs: vec![],
        };
        assert_eq!(worker_consistency(&[rec("w", 0, "x", N)], &plain).unwrap(), 1.0);
    }

    #[test]
    fn pooled_report_on_unanimous_labels() {
        use Answer::*;
        let b = five_dup_batch();
        let mut labels = Vec::new();
        for w in 0..5 {
            for p in 0..10 {
                let ans = if p % 5 < 3 { Y } else { N };
                labels.push(rec(&format!("w{w}"), p, &b.items[p], ans));
            }
        }
        let report = agreement_pooled(&labels, std::slice::from_ref(&b), 5).unwrap();
        assert_eq!(report.fleiss_kappa, 1.0);
        assert_eq!(report.krippendorff_alpha, 1.0);
        assert_eq!(report.per_worker_consistency.len(), 5);
        assert!(report.per_worker_consistency.values().all(|&c| c == 1.0));
        let per = agreement_per_batch(&labels, &[b], 5);
        assert_eq!(per["b"].as_ref().unwrap().fleiss_kappa, 1.0);
    }
}

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    /// Tau-b.
    pub tau: f64,
    pub n: usize,
    pub concordant: u64,
    pub discordant: u64,
    /// Pairs tied in the first ranking only.
    pub ties_first: u64,
    /// Pairs tied in the second ranking only.
    pub ties_second: u64,
    pub ties_both: u64,
}

/// Scores for a plain ordered list: earlier entries rank higher.
pub fn scores_from_ranking<S: AsRef<str>>(ids: &[S]) -> Vec<(String, f64)> {
    let n = ids.len();
    ids.iter()
        .enumerate()
        .map(|(i, id)| (id.as_ref().to_string(), (n - i) as f64))
        .collect()
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Sum of C(run, 2) over runs of equal adjacent values.
fn tied_pairs<T, F: Fn(&T, &T) -> bool>(xs: &[T], eq: F) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in xs.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    total + pairs(run)
}

/// Stable merge sort by `f64::total_cmp`, returning the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Tie-corrected Kendall correlation between two scored rankings of the same
/// ids, by Knight's O(n log n) pair counting.
pub fn kendall_tau(r1: &[(String, f64)], r2: &[(String, f64)]) -> Result<RankCorrelation> {
    if r1.len() != r2.len() {
        return Err(Error::IdMismatch(format!("{} vs {} entries", r1.len(), r2.len())));
    }
    let mut second: HashMap<&str, f64> = HashMap::with_capacity(r2.len());
    for (id, s) in r2 {
        if second.insert(id.as_str(), *s).is_some() {
            return Err(Error::IdMismatch(format!("id {id:?} repeated in second ranking")));
        }
    }
    let mut xy: Vec<(f64, f64)> = Vec::with_capacity(r1.len());
    let mut seen = std::collections::HashSet::with_capacity(r1.len());
    for (id, x) in r1 {
        if !seen.insert(id.as_str()) {
            return Err(Error::IdMismatch(format!("id {id:?} repeated in first ranking")));
        }
        let y = *second
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("id {id:?} missing from second ranking")))?;
        if x.is_nan() || y.is_nan() {
            return Err(Error::invalid(format!("score for {id:?} is NaN")));
        }
        // +0.0 folds -0.0 into 0.0 so total_cmp agrees with ==
        xy.push((*x + 0.0, y + 0.0));
    }
    let n = xy.len();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = pairs(n as u64);
    let n1 = tied_pairs(&xy, |a, b| a.0 == b.0);
    let n3 = tied_pairs(&xy, |a, b| a == b);
    let mut ys: Vec<f64> = xy.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = sort_counting_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys, |a, b| a == b);
    let concordant = n0 + n3 - n1 - n2 - discordant;
    let denom = (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
    let tau = if denom == 0.0 {
        // a constant ranking carries no order information
        0.0
    } else {
        (concordant as f64 - discordant as f64) / denom
    };
    Ok(RankCorrelation {
        tau,
        n,
        concordant,
        discordant,
        ties_first: n1 - n3,
        ties_second: n2 - n3,
        ties_both: n3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(x: &[f64], y: &[f64]) -> (u64, u64, f64) {
        let (mut c, mut d, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let sx = x[i].partial_cmp(&x[j]).unwrap();
                let sy = y[i].partial_cmp(&y[j]).unwrap();
                match (sx.is_eq(), sy.is_eq()) {
                    (true, true) => {}
                    (true, false) => tx += 1,
                    (false, true) => ty += 1,
                    _ if sx == sy => c += 1,
                    _ => d += 1,
                }
            }
        }
        let tau = (c as f64 - d as f64) / (((c + d + tx) as f64) * ((c + d + ty) as f64)).sqrt();
        (c, d, tau)
    }

    fn scored(xs: &[f64]) -> Vec<(String, f64)> {
        xs.iter().enumerate().map(|(i, &x)| (format!("id{i}"), x)).collect()
    }

    #[test]
    fn three_item_example() {
        let r1 = scores_from_ranking(&["a", "b", "c"]);
        let r2 = scores_from_ranking(&["a", "c", "b"]);
        let t = kendall_tau(&r1, &r2).unwrap();
        assert!((t.tau - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((t.concordant, t.discordant), (2, 1));
    }

    #[test]
    fn identity_and_reverse() {
        let ids: Vec<String> = (0..20).map(|i| format!("x{i}")).collect();
        let r = scores_from_ranking(&ids);
        assert_eq!(kendall_tau(&r, &r).unwrap().tau, 1.0);
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(kendall_tau(&r, &scores_from_ranking(&rev)).unwrap().tau, -1.0);
    }

    #[test]
    fn mismatched_ids() {
        let r1 = scores_from_ranking(&["a", "b"]);
        let r2 = scores_from_ranking(&["a", "c"]);
        assert!(matches!(kendall_tau(&r1, &r2), Err(Error::IdMismatch(_))));
        assert!(kendall_tau(&r1, &r1[..1]).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(pairs in proptest::collection::vec((0u8..6, 0u8..6), 2..60)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let got = kendall_tau(&scored(&x), &scored(&y)).unwrap();
            let (c, d, tau) = brute(&x, &y);
            prop_assert_eq!((got.concordant, got.discordant), (c, d));
            if tau.is_finite() {
                prop_assert!((got.tau - tau).abs() < 1e-12);
                let sym = kendall_tau(&scored(&y), &scored(&x)).unwrap();
                prop_assert!((sym.tau - got.tau).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&got.tau));
            }
        }
    }
}

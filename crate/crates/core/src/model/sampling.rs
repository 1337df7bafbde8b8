use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value at position `ceil(p/100 * n)` (1-based) of the ascending sample.
/// `p = 0` yields the minimum.
pub fn nearest_rank_percentile(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty sample"));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::invalid(format!("percentile {percentile} outside 0..=100")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (percentile / 100.0 * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round2Samples {
    /// Random draw among predicted positives at or above the cutoff.
    pub type1: Vec<ScoredItem>,
    /// Smallest |score| across both classes, excluding Type-1 picks.
    pub type2: Vec<ScoredItem>,
    /// Percentile cutoff over positive scores; absent when nothing scored positive.
    pub cutoff: Option<f64>,
    pub type1_eligible: usize,
    pub warnings: Vec<String>,
}

/// Picks high-confidence positives (Type-1) and near-boundary items (Type-2)
/// for the next annotation round. Short pools are returned whole with a warning.
pub fn select_round2_samples(
    scored: &[ScoredItem],
    type1_count: usize,
    type2_count: usize,
    percentile: f64,
    seed: u64,
) -> Result<Round2Samples> {
    if scored.is_empty() {
        return Err(Error::invalid("no scored items to sample from"));
    }
    let mut warnings = Vec::new();
    let positive_scores: Vec<f64> = scored.iter().filter(|s| s.score > 0.0).map(|s| s.score).collect();
    let cutoff = if positive_scores.is_empty() {
        None
    } else {
        Some(nearest_rank_percentile(&positive_scores, percentile)?)
    };

    let mut eligible: Vec<&ScoredItem> = match cutoff {
        Some(c) => scored.iter().filter(|s| s.score > 0.0 && s.score >= c).collect(),
        None => Vec::new(),
    };
    // canonical order first so the draw depends only on the seed
    eligible.sort_by(|a, b| a.id.cmp(&b.id));
    let type1_eligible = eligible.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    if type1_count > eligible.len() {
        let msg = format!("requested {type1_count} Type-1 items but only {} are eligible", eligible.len());
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut type1: Vec<ScoredItem> = eligible.into_iter().take(type1_count).cloned().collect();
    type1.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));

    let taken: std::collections::HashSet<&str> = type1.iter().map(|s| s.id.as_str()).collect();
    let mut rest: Vec<&ScoredItem> = scored.iter().filter(|s| !taken.contains(s.id.as_str())).collect();
    rest.sort_by(|a, b| a.score.abs().total_cmp(&b.score.abs()).then_with(|| a.id.cmp(&b.id)));
    if type2_count > rest.len() {
        let msg = format!("requested {type2_count} Type-2 items but only {} remain", rest.len());
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let type2 = rest.into_iter().take(type2_count).cloned().collect();

    Ok(Round2Samples {
        type1,
        type2,
        cutoff,
        type1_eligible,
        warnings,
    })
}

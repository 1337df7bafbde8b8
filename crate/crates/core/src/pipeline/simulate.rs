//! Simulated crowd workers standing in for a labeling marketplace.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{stage_seed, synthetic::simulation_epoch};
use crate::annotation::{Answer, Batch, LabelRecord, RATERS_PER_TWEET};
use crate::error::{Error, Result};
use crate::service::{ManualClock, ProjectDefinition, Service, ServiceError};

/// Answers from a ground-truth oracle, each flipped independently with
/// `flip_probability`.
#[derive(Debug, Clone)]
pub struct SimulatedAnnotator {
    truth: Arc<BTreeMap<String, bool>>,
    flip_probability: f64,
    seed: u64,
}

impl SimulatedAnnotator {
    pub fn new(truth: Arc<BTreeMap<String, bool>>, flip_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&flip_probability) {
            return Err(Error::invalid(format!(
                "flip probability must be within [0, 0.5), got {flip_probability}"
            )));
        }
        Ok(SimulatedAnnotator {
            truth,
            flip_probability,
            seed,
        })
    }

    pub fn flip_probability(&self) -> f64 {
        self.flip_probability
    }

    pub fn truth(&self, tweet_id: &str) -> Result<bool> {
        self.truth
            .get(tweet_id)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no oracle label for tweet {tweet_id}")))
    }

    /// One worker's answers to every position of `batch`. The draw depends
    /// only on the seed, the worker and the batch, not on call order.
    pub fn answer_batch(&self, batch: &Batch, worker_id: &str) -> Result<BTreeMap<usize, Answer>> {
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(self.seed, worker_id, &batch.id));
        batch
            .items
            .iter()
            .enumerate()
            .map(|(pos, tweet)| {
                let y = self.truth(tweet)?;
                let flip = rng.random::<f64>() < self.flip_probability;
                Ok((pos, Answer::from_bool(y != flip)))
            })
            .collect()
    }
}

fn worker_name(w: usize) -> String {
    format!("sim-w{w:04}")
}

/// Every one of `n_workers` answers every position of every batch.
pub fn simulate_annotations(
    batches: &[Batch],
    annotator: &SimulatedAnnotator,
    n_workers: usize,
) -> Result<Vec<LabelRecord>> {
    let uncovered: BTreeSet<&str> = batches
        .iter()
        .flat_map(|b| b.items.iter())
        .filter(|t| !annotator.truth.contains_key(t.as_str()))
        .map(String::as_str)
        .collect();
    if !uncovered.is_empty() {
        let list: Vec<&str> = uncovered.into_iter().collect();
        return Err(Error::NotFound(format!("no oracle label for tweet(s) {}", list.join(", "))));
    }
    let epoch = simulation_epoch();
    let mut out = Vec::new();
    for (bi, batch) in batches.iter().enumerate() {
        for w in 0..n_workers {
            let worker = worker_name(w);
            let at = epoch + Duration::minutes((bi * n_workers + w) as i64);
            for (position, answer) in annotator.answer_batch(batch, &worker)? {
                out.push(LabelRecord {
                    batch_id: batch.id.clone(),
                    worker_id: worker.clone(),
                    position,
                    tweet_id: batch.items[position].clone(),
                    answer,
                    submitted_at: at,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrowdRun {
    pub workers: usize,
    pub submissions: usize,
    pub disqualified: usize,
}

/// Drives simulated workers through the labeling service until every batch
/// of `project_id` has its full quota of qualified workers. Workers arrive one
/// at a time and keep taking batches until none is offered to them.
pub(crate) fn crowd_through_service(
    svc: &Service,
    clock: &ManualClock,
    def: &ProjectDefinition,
    annotator: &SimulatedAnnotator,
    max_workers: usize,
) -> Result<CrowdRun> {
    let batches: BTreeMap<&str, &Batch> = def.batches.iter().map(|b| (b.id.as_str(), b)).collect();
    let map = |e: ServiceError| match e {
        ServiceError::Core(e) => e,
        other => Error::Conflict(other.to_string()),
    };
    let mut run = CrowdRun::default();
    for w in 0..max_workers {
        let status = svc.status(&def.id).map_err(map)?;
        if status.batches_complete == status.batches_total {
            return Ok(run);
        }
        let worker = worker_name(w);
        run.workers += 1;
        while let Some(view) = svc.next_batch(&def.id, &worker).map_err(map)? {
            let batch = batches[view.batch_id.as_str()];
            let answers = annotator.answer_batch(batch, &worker)?;
            clock.advance(Duration::minutes(1));
            let receipt = svc
                .submit_labels(&def.id, &worker, &view.batch_id, &answers)
                .map_err(map)?;
            run.submissions += 1;
            if !receipt.qualified {
                run.disqualified += 1;
            }
        }
    }
    let status = svc.status(&def.id).map_err(map)?;
    if status.batches_complete == status.batches_total {
        Ok(run)
    } else {
        Err(Error::Invalid(format!(
            "{} of {} batches still lack {RATERS_PER_TWEET} qualified workers after {max_workers} workers",
            status.batches_total - status.batches_complete,
            status.batches_total
        )))
    }
}

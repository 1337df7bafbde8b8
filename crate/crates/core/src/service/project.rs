use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::annotation::{
    aggregate_labels, consistency_of, Answer, Batch, LabelRecord, Tier, QUALIFICATION_THRESHOLD,
    RATERS_PER_TWEET,
};
use crate::error::{Error, Result};

/// Static description of a project: its batches and the text to show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectDefinition {
    pub id: String,
    pub round: u32,
    pub batches: Vec<Batch>,
    /// Tweet id to display text.
    pub texts: BTreeMap<String, String>,
}

impl ProjectDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains('/') {
            return Err(Error::invalid(format!("bad project id {:?}", self.id)));
        }
        let mut ids = BTreeSet::new();
        for b in &self.batches {
            b.validate()?;
            if !ids.insert(b.id.as_str()) {
                return Err(Error::invalid(format!("batch id {} repeated", b.id)));
            }
            if let Some(t) = b.items.iter().find(|t| !self.texts.contains_key(*t)) {
                return Err(Error::invalid(format!("batch {}: no text for tweet {t}", b.id)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let def: Self = serde_json::from_slice(&bytes)?;
        def.validate()?;
        Ok(def)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub worker_id: String,
    pub batch_id: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub batch_id: String,
    pub worker_id: String,
    /// One answer per position.
    pub answers: Vec<Answer>,
    pub submitted_at: DateTime<Utc>,
    pub consistency: f64,
    pub qualified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub tweet_id: String,
    pub expert_id: String,
    pub job_related: bool,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Assigned(Assignment),
    Expired {
        worker_id: String,
        batch_id: String,
        at: DateTime<Utc>,
    },
    Submitted(Submission),
    Adjudicated(Adjudication),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchStatus {
    Open,
    Assigned,
    Complete,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchProgress {
    pub batch_id: String,
    /// Workers whose submissions count, in arrival order.
    pub qualified: Vec<String>,
    /// Every worker who submitted, qualified or not.
    pub attempted: BTreeSet<String>,
    pub assigned_to: Option<String>,
}

impl BatchProgress {
    pub fn status(&self) -> BatchStatus {
        if self.qualified.len() >= RATERS_PER_TWEET {
            BatchStatus::Complete
        } else if self.assigned_to.is_some() {
            BatchStatus::Assigned
        } else {
            BatchStatus::Open
        }
    }
}

/// Derived state of a project. Everything here is a fold over the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectState {
    pub batches: Vec<BatchProgress>,
    /// Open assignment per worker.
    pub assignments: BTreeMap<String, Assignment>,
    pub submissions: Vec<Submission>,
    /// Current expert label per tweet.
    pub adjudications: BTreeMap<String, Adjudication>,
    pub adjudication_log: Vec<Adjudication>,
    pub events_applied: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItemView {
    pub position: usize,
    pub text: String,
}

/// What a worker sees. Tweet ids are withheld so repeated probes look like
/// ordinary items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchView {
    pub project_id: String,
    pub batch_id: String,
    pub worker_id: String,
    pub question: String,
    pub items: Vec<BatchItemView>,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub project_id: String,
    pub batch_id: String,
    pub worker_id: String,
    pub consistency: f64,
    pub qualified: bool,
    pub threshold: f64,
    pub batch_status: BatchStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub fleiss_kappa: f64,
    pub krippendorff_alpha: f64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectStatus {
    pub project_id: String,
    pub round: u32,
    pub batches_total: usize,
    pub batches_open: usize,
    pub batches_assigned: usize,
    pub batches_complete: usize,
    pub progress: f64,
    pub statistics_available: bool,
    pub agreement: Option<AgreementSummary>,
    pub tier_histogram: BTreeMap<Tier, usize>,
    pub per_worker_consistency: BTreeMap<String, f64>,
    pub disqualified_submissions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub tweet_id: String,
    pub text: String,
    pub tier: Tier,
    /// `job-3`, `not-job-4`, ...
    pub group: String,
    pub yes_count: usize,
    pub no_count: usize,
    pub expert_label: Option<bool>,
    pub expert_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationOutcome {
    pub tweet_id: String,
    pub job_related: bool,
    pub source: crate::annotation::GoldSource,
    pub expert_id: String,
    pub changed: bool,
    pub history: Vec<Adjudication>,
}

impl ProjectState {
    pub fn new(def: &ProjectDefinition) -> Self {
        ProjectState {
            batches: def
                .batches
                .iter()
                .map(|b| BatchProgress {
                    batch_id: b.id.clone(),
                    ..Default::default()
                })
                .collect(),
            assignments: BTreeMap::new(),
            submissions: Vec::new(),
            adjudications: BTreeMap::new(),
            adjudication_log: Vec::new(),
            events_applied: 0,
        }
    }

    fn batch_index(&self, batch_id: &str) -> Option<usize> {
        self.batches.iter().position(|b| b.batch_id == batch_id)
    }

    /// Applies one event. Events that contradict the state are rejected so a
    /// corrupted log fails loudly on replay.
    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        let n = self.events_applied + 1;
        let bad = |m: String| Error::invalid(format!("event {n}: {m}"));
        match ev {
            Event::Assigned(a) => {
                let i = self.batch_index(&a.batch_id).ok_or_else(|| bad(format!("unknown batch {}", a.batch_id)))?;
                if self.batches[i].assigned_to.is_some() || self.assignments.contains_key(&a.worker_id) {
                    return Err(bad("double assignment".into()));
                }
                self.batches[i].assigned_to = Some(a.worker_id.clone());
                self.assignments.insert(a.worker_id.clone(), a.clone());
            }
            Event::Expired { worker_id, batch_id, .. } => {
                self.release(worker_id, batch_id).map_err(bad)?;
            }
            Event::Submitted(s) => {
                self.release(&s.worker_id, &s.batch_id).map_err(bad)?;
                let i = self.batch_index(&s.batch_id).expect("released batch exists");
                let b = &mut self.batches[i];
                if !b.attempted.insert(s.worker_id.clone()) {
                    return Err(bad("worker submitted the same batch twice".into()));
                }
                if s.qualified {
                    b.qualified.push(s.worker_id.clone());
                }
                self.submissions.push(s.clone());
            }
            Event::Adjudicated(a) => {
                self.adjudications.insert(a.tweet_id.clone(), a.clone());
                self.adjudication_log.push(a.clone());
            }
        }
        self.events_applied += 1;
        Ok(())
    }

    fn release(&mut self, worker_id: &str, batch_id: &str) -> std::result::Result<(), String> {
        match self.assignments.get(worker_id) {
            Some(a) if a.batch_id == batch_id => {}
            _ => return Err(format!("worker {worker_id} holds no assignment on {batch_id}")),
        }
        self.assignments.remove(worker_id);
        let i = self.batch_index(batch_id).ok_or_else(|| format!("unknown batch {batch_id}"))?;
        self.batches[i].assigned_to = None;
        Ok(())
    }

    pub fn expired(&self, now: DateTime<Utc>) -> Vec<Event> {
        self.assignments
            .values()
            .filter(|a| a.expires_at <= now)
            .map(|a| Event::Expired {
                worker_id: a.worker_id.clone(),
                batch_id: a.batch_id.clone(),
                at: now,
            })
            .collect()
    }

    /// Least-served open batch the worker has not already submitted.
    pub fn pick_batch(&self, worker_id: &str) -> Option<&BatchProgress> {
        self.batches
            .iter()
            .filter(|b| b.status() == BatchStatus::Open && !b.attempted.contains(worker_id))
            .min_by_key(|b| b.qualified.len())
    }

    pub fn counted_labels(&self, def: &ProjectDefinition) -> Vec<LabelRecord> {
        let by_id: HashMap<&str, &Batch> = def.batches.iter().map(|b| (b.id.as_str(), b)).collect();
        self.submissions
            .iter()
            .filter(|s| s.qualified)
            .flat_map(|s| {
                let batch = by_id[s.batch_id.as_str()];
                s.answers.iter().enumerate().map(move |(pos, &answer)| LabelRecord {
                    batch_id: s.batch_id.clone(),
                    worker_id: s.worker_id.clone(),
                    position: pos,
                    tweet_id: batch.items[pos].clone(),
                    answer,
                    submitted_at: s.submitted_at,
                })
            })
            .collect()
    }

    pub fn find_submission(&self, worker_id: &str, batch_id: &str) -> Option<&Submission> {
        self.submissions
            .iter()
            .find(|s| s.worker_id == worker_id && s.batch_id == batch_id)
    }
}

pub(crate) fn view(def: &ProjectDefinition, batch: &Batch, a: &Assignment) -> BatchView {
    BatchView {
        project_id: def.id.clone(),
        batch_id: batch.id.clone(),
        worker_id: a.worker_id.clone(),
        question: crate::annotation::QUESTION.to_string(),
        items: batch
            .items
            .iter()
            .enumerate()
            .map(|(position, id)| BatchItemView {
                position,
                text: def.texts[id].clone(),
            })
            .collect(),
        issued_at: a.issued_at,
        expires_at: a.expires_at,
    }
}

pub(crate) fn receipt(def: &ProjectDefinition, state: &ProjectState, s: &Submission) -> Receipt {
    let status = state
        .batch_index(&s.batch_id)
        .map(|i| state.batches[i].status())
        .unwrap_or(BatchStatus::Open);
    Receipt {
        project_id: def.id.clone(),
        batch_id: s.batch_id.clone(),
        worker_id: s.worker_id.clone(),
        consistency: s.consistency,
        qualified: s.qualified,
        threshold: QUALIFICATION_THRESHOLD,
        batch_status: status,
    }
}

/// Checks a submitted answer map and turns it into a position-ordered list.
pub(crate) fn complete_answers(
    batch: &Batch,
    answers: &BTreeMap<usize, Answer>,
) -> std::result::Result<Vec<Answer>, ServiceError> {
    if let Some((&p, _)) = answers.iter().find(|(&p, _)| p >= batch.len()) {
        return Err(ServiceError::InvalidAnswers(format!(
            "position {p} outside batch of {}",
            batch.len()
        )));
    }
    if answers.len() != batch.len() {
        return Err(ServiceError::Incomplete {
            answered: answers.len(),
            expected: batch.len(),
        });
    }
    Ok(answers.values().copied().collect())
}

pub(crate) fn consistency(batch: &Batch, answers: &[Answer]) -> f64 {
    let map: HashMap<usize, Answer> = answers.iter().copied().enumerate().collect();
    consistency_of(&map, &batch.dup_pairs)
}

pub(crate) fn status(def: &ProjectDefinition, state: &ProjectState) -> ProjectStatus {
    let count = |s: BatchStatus| state.batches.iter().filter(|b| b.status() == s).count();
    let complete = count(BatchStatus::Complete);
    let total = state.batches.len();

    let labels = state.counted_labels(def);
    let complete_ids: BTreeSet<&str> = state
        .batches
        .iter()
        .filter(|b| b.status() == BatchStatus::Complete)
        .map(|b| b.batch_id.as_str())
        .collect();
    let in_complete: Vec<LabelRecord> = labels
        .iter()
        .filter(|r| complete_ids.contains(r.batch_id.as_str()))
        .cloned()
        .collect();
    let complete_batches: Vec<Batch> = def
        .batches
        .iter()
        .filter(|b| complete_ids.contains(b.id.as_str()))
        .cloned()
        .collect();
    let agreement = if complete == 0 {
        None
    } else {
        crate::annotation::agreement_pooled(&in_complete, &complete_batches, RATERS_PER_TWEET)
            .ok()
            .map(|r| AgreementSummary {
                fleiss_kappa: r.fleiss_kappa,
                krippendorff_alpha: r.krippendorff_alpha,
                items: aggregate_labels(&in_complete).labels.len(),
            })
    };
    ProjectStatus {
        project_id: def.id.clone(),
        round: def.round,
        batches_total: total,
        batches_open: count(BatchStatus::Open),
        batches_assigned: count(BatchStatus::Assigned),
        batches_complete: complete,
        progress: if total == 0 { 0.0 } else { complete as f64 / total as f64 },
        statistics_available: agreement.is_some(),
        agreement,
        tier_histogram: aggregate_labels(&labels).histogram(),
        per_worker_consistency: crate::annotation::per_worker_consistency(&labels, &def.batches),
        disqualified_submissions: state.submissions.iter().filter(|s| !s.qualified).count(),
    }
}

pub(crate) fn queue(def: &ProjectDefinition, state: &ProjectState, include_decided: bool) -> Vec<QueueItem> {
    aggregate_labels(&state.counted_labels(def))
        .labels
        .into_iter()
        .filter(|a| !a.tier.is_unanimous())
        .filter_map(|a| {
            let current = state.adjudications.get(&a.tweet_id);
            if current.is_some() && !include_decided {
                return None;
            }
            Some(QueueItem {
                text: def.texts.get(&a.tweet_id).cloned().unwrap_or_default(),
                tier: a.tier,
                group: a.tier.short_name().to_string(),
                yes_count: a.yes_count,
                no_count: a.no_count,
                expert_label: current.map(|c| c.job_related),
                expert_id: current.map(|c| c.expert_id.clone()),
                tweet_id: a.tweet_id,
            })
        })
        .collect()
}

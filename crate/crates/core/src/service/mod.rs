//! Annotation service: batch assignment, label intake, progress and
//! agreement reporting, and expert adjudication, with an append-only event
//! log per project.

mod http;
mod project;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};

pub use http::{router, serve, TOKEN_HEADER};
pub use project::{
    Adjudication, AdjudicationOutcome, AgreementSummary, Assignment, BatchItemView, BatchProgress, BatchStatus,
    BatchView, Event, ProjectDefinition, ProjectState, ProjectStatus, QueueItem, Receipt, Submission,
};
pub use store::{read_events, replay, EventLog, Snapshot, EVENTS_FILE, PROJECT_FILE, SNAPSHOT_FILE};

use crate::annotation::{write_labels_csv, Answer, GoldSource, QUALIFICATION_THRESHOLD};
use crate::error::Error;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Settable clock for tests and simulations.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: chrono::Duration) {
        *self.0.lock().expect("clock lock") += by;
    }

    pub fn set(&self, to: DateTime<Utc>) {
        *self.0.lock().expect("clock lock") = to;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock lock")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown project {0:?}")]
    UnknownProject(String),
    #[error("unknown batch {0:?}")]
    UnknownBatch(String),
    #[error("worker already holds batch {}", .0.batch_id)]
    AlreadyAssigned(Box<BatchView>),
    #[error("worker {worker_id} holds no assignment on batch {batch_id}")]
    NoAssignment { worker_id: String, batch_id: String },
    #[error("assignment of batch {batch_id} to {worker_id} expired")]
    Expired { worker_id: String, batch_id: String },
    #[error("incomplete submission: {answered} of {expected} positions answered")]
    Incomplete { answered: usize, expected: usize },
    #[error("invalid answers: {0}")]
    InvalidAnswers(String),
    #[error("batch {0} was already submitted with different answers")]
    ResubmissionConflict(String),
    #[error("tweet {0:?} is not in the adjudication queue")]
    NotInQueue(String),
    #[error("missing or wrong access token")]
    Unauthorized,
    #[error(transparent)]
    Core(#[from] Error),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub assignment_ttl: chrono::Duration,
    pub token: Option<String>,
    /// Write a snapshot after this many new events; 0 disables.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            assignment_ttl: chrono::Duration::minutes(30),
            token: None,
            snapshot_every: 100,
        }
    }
}

struct Runtime {
    state: ProjectState,
    log: Option<EventLog>,
    since_snapshot: u64,
}

struct ProjectHandle {
    def: Arc<ProjectDefinition>,
    dir: Option<PathBuf>,
    runtime: Mutex<Runtime>,
}

impl ProjectHandle {
    /// Appends to the log, then applies. Both happen under the project lock,
    /// so log order equals application order.
    fn commit(&self, rt: &mut Runtime, ev: Event, snapshot_every: u64) -> ServiceResult<()> {
        if let Some(log) = rt.log.as_mut() {
            log.append(&ev)?;
        }
        rt.state.apply(&ev)?;
        rt.since_snapshot += 1;
        if snapshot_every > 0 && rt.since_snapshot >= snapshot_every {
            if let Some(dir) = &self.dir {
                store::write_snapshot(dir, &rt.state)?;
            }
            rt.since_snapshot = 0;
        }
        Ok(())
    }

    fn expire(&self, rt: &mut Runtime, now: DateTime<Utc>, snapshot_every: u64) -> ServiceResult<()> {
        for ev in rt.state.expired(now) {
            self.commit(rt, ev, snapshot_every)?;
        }
        Ok(())
    }
}

pub struct Service {
    projects: BTreeMap<String, ProjectHandle>,
    clock: Arc<dyn Clock>,
    config: ServiceConfig,
}

impl Service {
    pub fn new(config: ServiceConfig, clock: Arc<dyn Clock>) -> Self {
        Service {
            projects: BTreeMap::new(),
            clock,
            config,
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// In-memory project without persistence.
    pub fn add_project(&mut self, def: ProjectDefinition) -> crate::Result<()> {
        def.validate()?;
        let state = ProjectState::new(&def);
        self.insert(def, None, state, None)
    }

    /// Project persisted under `dir`; existing snapshot and events are
    /// replayed, and the definition is written if absent.
    pub fn open_project(&mut self, def: ProjectDefinition, dir: impl AsRef<Path>) -> crate::Result<()> {
        def.validate()?;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let def_path = dir.join(PROJECT_FILE);
        if !def_path.exists() {
            def.save(&def_path)?;
        }
        let state = store::restore(&def, dir)?;
        let log = EventLog::open(dir.join(EVENTS_FILE))?;
        self.insert(def, Some(dir.to_path_buf()), state, Some(log))
    }

    /// Opens every `<data_dir>/projects/<id>/project.json`.
    pub fn open_data_dir(data_dir: impl AsRef<Path>, config: ServiceConfig, clock: Arc<dyn Clock>) -> crate::Result<Self> {
        let mut svc = Service::new(config, clock);
        let root = data_dir.as_ref().join("projects");
        if !root.is_dir() {
            return Ok(svc);
        }
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
            .map_err(|e| Error::io(&root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(PROJECT_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let def = ProjectDefinition::load(dir.join(PROJECT_FILE))?;
            svc.open_project(def, &dir)?;
        }
        Ok(svc)
    }

    fn insert(
        &mut self,
        def: ProjectDefinition,
        dir: Option<PathBuf>,
        state: ProjectState,
        log: Option<EventLog>,
    ) -> crate::Result<()> {
        if self.projects.contains_key(&def.id) {
            return Err(Error::Conflict(format!("project {} already loaded", def.id)));
        }
        self.projects.insert(
            def.id.clone(),
            ProjectHandle {
                def: Arc::new(def),
                dir,
                runtime: Mutex::new(Runtime {
                    state,
                    log,
                    since_snapshot: 0,
                }),
            },
        );
        Ok(())
    }

    pub fn project_ids(&self) -> Vec<String> {
        self.projects.keys().cloned().collect()
    }

    fn project(&self, id: &str) -> ServiceResult<&ProjectHandle> {
        self.projects
            .get(id)
            .ok_or_else(|| ServiceError::UnknownProject(id.to_string()))
    }

    fn lock<'a>(&self, p: &'a ProjectHandle) -> std::sync::MutexGuard<'a, Runtime> {
        p.runtime.lock().expect("project lock poisoned")
    }

    /// `Ok(None)` when no batch is available for this worker.
    pub fn next_batch(&self, project_id: &str, worker_id: &str) -> ServiceResult<Option<BatchView>> {
        if worker_id.is_empty() {
            return Err(ServiceError::InvalidAnswers("worker id is empty".into()));
        }
        let p = self.project(project_id)?;
        let now = self.clock.now();
        let mut rt = self.lock(p);
        p.expire(&mut rt, now, self.config.snapshot_every)?;
        if let Some(a) = rt.state.assignments.get(worker_id) {
            let batch = p.def.batches.iter().find(|b| b.id == a.batch_id).expect("assigned batch exists");
            return Err(ServiceError::AlreadyAssigned(Box::new(project::view(&p.def, batch, a))));
        }
        let Some(pick) = rt.state.pick_batch(worker_id) else {
            return Ok(None);
        };
        let a = Assignment {
            worker_id: worker_id.to_string(),
            batch_id: pick.batch_id.clone(),
            issued_at: now,
            expires_at: now + self.config.assignment_ttl,
        };
        p.commit(&mut rt, Event::Assigned(a.clone()), self.config.snapshot_every)?;
        let batch = p.def.batches.iter().find(|b| b.id == a.batch_id).expect("picked batch exists");
        Ok(Some(project::view(&p.def, batch, &a)))
    }

    pub fn submit_labels(
        &self,
        project_id: &str,
        worker_id: &str,
        batch_id: &str,
        answers: &BTreeMap<usize, Answer>,
    ) -> ServiceResult<Receipt> {
        let p = self.project(project_id)?;
        let batch = p
            .def
            .batches
            .iter()
            .find(|b| b.id == batch_id)
            .ok_or_else(|| ServiceError::UnknownBatch(batch_id.to_string()))?;
        let now = self.clock.now();
        let mut rt = self.lock(p);

        if let Some(prev) = rt.state.find_submission(worker_id, batch_id) {
            let same = answers.len() == prev.answers.len()
                && answers.iter().all(|(&pos, a)| prev.answers.get(pos) == Some(a));
            return if same {
                Ok(project::receipt(&p.def, &rt.state, prev))
            } else {
                Err(ServiceError::ResubmissionConflict(batch_id.to_string()))
            };
        }
        let held = rt.state.assignments.get(worker_id).cloned();
        match held {
            Some(a) if a.batch_id == batch_id => {
                if a.expires_at <= now {
                    p.expire(&mut rt, now, self.config.snapshot_every)?;
                    return Err(ServiceError::Expired {
                        worker_id: worker_id.to_string(),
                        batch_id: batch_id.to_string(),
                    });
                }
            }
            _ => {
                return Err(ServiceError::NoAssignment {
                    worker_id: worker_id.to_string(),
                    batch_id: batch_id.to_string(),
                })
            }
        }
        let ordered = project::complete_answers(batch, answers)?;
        let consistency = project::consistency(batch, &ordered);
        let sub = Submission {
            batch_id: batch_id.to_string(),
            worker_id: worker_id.to_string(),
            answers: ordered,
            submitted_at: now,
            consistency,
            qualified: consistency >= QUALIFICATION_THRESHOLD,
        };
        if !sub.qualified {
            log::info!(
                "worker {worker_id} scored {consistency:.2} on {batch_id}; submission kept out of the counts and batch re-queued"
            );
        }
        p.commit(&mut rt, Event::Submitted(sub.clone()), self.config.snapshot_every)?;
        Ok(project::receipt(&p.def, &rt.state, &sub))
    }

    pub fn status(&self, project_id: &str) -> ServiceResult<ProjectStatus> {
        let p = self.project(project_id)?;
        let state = self.lock(p).state.clone();
        Ok(project::status(&p.def, &state))
    }

    pub fn adjudication_queue(&self, project_id: &str, include_decided: bool) -> ServiceResult<Vec<QueueItem>> {
        let p = self.project(project_id)?;
        let state = self.lock(p).state.clone();
        Ok(project::queue(&p.def, &state, include_decided))
    }

    /// Records an expert label. Repeating the current label is a no-op; a
    /// different label replaces it and both stay in the audit trail.
    pub fn adjudicate(
        &self,
        project_id: &str,
        tweet_id: &str,
        job_related: bool,
        expert_id: &str,
    ) -> ServiceResult<AdjudicationOutcome> {
        let p = self.project(project_id)?;
        let now = self.clock.now();
        let mut rt = self.lock(p);
        let eligible = project::queue(&p.def, &rt.state, true)
            .iter()
            .any(|q| q.tweet_id == tweet_id);
        if !eligible {
            return Err(ServiceError::NotInQueue(tweet_id.to_string()));
        }
        let changed = rt
            .state
            .adjudications
            .get(tweet_id)
            .is_none_or(|cur| cur.job_related != job_related);
        if changed {
            let ev = Event::Adjudicated(Adjudication {
                tweet_id: tweet_id.to_string(),
                expert_id: expert_id.to_string(),
                job_related,
                at: now,
            });
            p.commit(&mut rt, ev, self.config.snapshot_every)?;
        }
        let cur = &rt.state.adjudications[tweet_id];
        Ok(AdjudicationOutcome {
            tweet_id: tweet_id.to_string(),
            job_related: cur.job_related,
            source: GoldSource::Community,
            expert_id: cur.expert_id.clone(),
            changed,
            history: rt
                .state
                .adjudication_log
                .iter()
                .filter(|a| a.tweet_id == tweet_id)
                .cloned()
                .collect(),
        })
    }

    /// Current expert labels, for gold-set assembly.
    pub fn adjudications(&self, project_id: &str) -> ServiceResult<HashMap<String, bool>> {
        let p = self.project(project_id)?;
        let rt = self.lock(p);
        Ok(rt
            .state
            .adjudications
            .iter()
            .map(|(k, v)| (k.clone(), v.job_related))
            .collect())
    }

    pub fn counted_labels(&self, project_id: &str) -> ServiceResult<Vec<crate::annotation::LabelRecord>> {
        let p = self.project(project_id)?;
        let rt = self.lock(p);
        Ok(rt.state.counted_labels(&p.def))
    }

    pub fn export_labels_csv(&self, project_id: &str) -> ServiceResult<Vec<u8>> {
        let labels = self.counted_labels(project_id)?;
        let mut buf = Vec::new();
        write_labels_csv(&labels, &mut buf)?;
        Ok(buf)
    }

    pub fn state(&self, project_id: &str) -> ServiceResult<ProjectState> {
        let p = self.project(project_id)?;
        let state = self.lock(p).state.clone();
        Ok(state)
    }

    pub fn definition(&self, project_id: &str) -> ServiceResult<Arc<ProjectDefinition>> {
        Ok(self.project(project_id)?.def.clone())
    }

    /// Writes a snapshot for every persisted project.
    pub fn checkpoint(&self) -> crate::Result<()> {
        for p in self.projects.values() {
            if let Some(dir) = &p.dir {
                let mut rt = self.lock(p);
                store::write_snapshot(dir, &rt.state)?;
                rt.since_snapshot = 0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

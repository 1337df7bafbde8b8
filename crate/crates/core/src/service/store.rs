use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::project::{Event, ProjectDefinition, ProjectState};
use crate::error::{Error, Result};

pub const PROJECT_FILE: &str = "project.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Append-only JSON-lines event log.
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(EventLog { path, file })
    }

    pub fn append(&mut self, ev: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(ev)?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: ProjectState,
}

/// Reads every complete event line. A torn final line (no newline) is
/// ignored with a warning.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut reader = BufReader::new(f);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        n += 1;
        if !line.ends_with('\n') {
            log::warn!("{}: ignoring incomplete final line {n}", path.display());
            break;
        }
        let ev = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format {
            what: "event log",
            line: n,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Folds `events` over a fresh state.
pub fn replay(def: &ProjectDefinition, events: &[Event]) -> Result<ProjectState> {
    let mut state = ProjectState::new(def);
    for ev in events {
        state.apply(ev)?;
    }
    Ok(state)
}

/// Snapshot (if any) plus the events logged after it.
pub(crate) fn restore(def: &ProjectDefinition, dir: &Path) -> Result<ProjectState> {
    let events = read_events(dir.join(EVENTS_FILE))?;
    let snap_path = dir.join(SNAPSHOT_FILE);
    let mut state = match std::fs::read(&snap_path) {
        Ok(bytes) => serde_json::from_slice::<Snapshot>(&bytes)?.state,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => ProjectState::new(def),
        Err(e) => return Err(Error::io(&snap_path, e)),
    };
    let done = state.events_applied as usize;
    if done > events.len() {
        return Err(Error::invalid(format!(
            "snapshot covers {done} events but the log holds {}",
            events.len()
        )));
    }
    for ev in &events[done..] {
        state.apply(ev)?;
    }
    Ok(state)
}

pub(crate) fn write_snapshot(dir: &Path, state: &ProjectState) -> Result<()> {
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    let bytes = serde_json::to_vec(&Snapshot { state: state.clone() })?;
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    let dst = dir.join(SNAPSHOT_FILE);
    std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
}

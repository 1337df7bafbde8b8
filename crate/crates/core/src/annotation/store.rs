use std::collections::BTreeMap;
use std::sync::RwLock;

use super::LabelRecord;
use crate::error::{Error, Result};

type Key = (String, String, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// Same key and answer already stored.
    Unchanged,
}

/// Concurrent label store keyed by `(batch_id, worker_id, position)`.
///
/// Writing an identical record twice is a no-op; a different answer for an
/// existing key is rejected.
#[derive(Debug, Default)]
pub struct LabelStore {
    records: RwLock<BTreeMap<Key, LabelRecord>>,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, record: LabelRecord) -> Result<InsertOutcome> {
        let mut map = self.records.write().expect("label store lock poisoned");
        Self::check(&map, &record)?;
        Ok(Self::put(&mut map, record))
    }

    /// Inserts all records or none.
    pub fn insert_all(&self, records: Vec<LabelRecord>) -> Result<usize> {
        let mut map = self.records.write().expect("label store lock poisoned");
        for r in &records {
            Self::check(&map, r)?;
        }
        let mut seen = std::collections::HashMap::new();
        for r in &records {
            if let Some(prev) = seen.insert(r.key(), r.answer) {
                if prev != r.answer {
                    return Err(Error::Conflict(format!(
                        "batch {} worker {} position {} answered twice differently",
                        r.batch_id, r.worker_id, r.position
                    )));
                }
            }
        }
        Ok(records
            .into_iter()
            .filter(|r| Self::put(&mut map, r.clone()) == InsertOutcome::Inserted)
            .count())
    }

    fn check(map: &BTreeMap<Key, LabelRecord>, record: &LabelRecord) -> Result<()> {
        match map.get(&record.key()) {
            Some(existing) if existing.answer != record.answer || existing.tweet_id != record.tweet_id => {
                Err(Error::Conflict(format!(
                    "batch {} worker {} position {} already answered {}",
                    record.batch_id, record.worker_id, record.position, existing.answer
                )))
            }
            _ => Ok(()),
        }
    }

    fn put(map: &mut BTreeMap<Key, LabelRecord>, record: LabelRecord) -> InsertOutcome {
        match map.entry(record.key()) {
            std::collections::btree_map::Entry::Occupied(_) => InsertOutcome::Unchanged,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(record);
                InsertOutcome::Inserted
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("label store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Consistent copy of every record, ordered by key.
    pub fn snapshot(&self) -> Vec<LabelRecord> {
        self.records
            .read()
            .expect("label store lock poisoned")
            .values()
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Answer;
    use chrono::Utc;
    use std::sync::Arc;

    fn rec(worker: &str, pos: usize, answer: Answer) -> LabelRecord {
        LabelRecord {
            batch_id: "b".into(),
            worker_id: worker.into(),
            position: pos,
            tweet_id: format!("t{pos}"),
            answer,
            submitted_at: Utc::now(),
        }
    }

    #[test]
    fn idempotent_and_conflicting_writes() {
        let s = LabelStore::new();
        assert_eq!(s.insert(rec("w", 0, Answer::Y)).unwrap(), InsertOutcome::Inserted);
        assert_eq!(s.insert(rec("w", 0, Answer::Y)).unwrap(), InsertOutcome::Unchanged);
        assert!(matches!(s.insert(rec("w", 0, Answer::N)), Err(Error::Conflict(_))));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn insert_all_is_atomic() {
        let s = LabelStore::new();
        s.insert(rec("w", 1, Answer::N)).unwrap();
        let batch = vec![rec("w", 0, Answer::Y), rec("w", 1, Answer::Y)];
        assert!(s.insert_all(batch).is_err());
        assert_eq!(s.len(), 1);
        let inner_conflict = vec![rec("v", 0, Answer::Y), rec("v", 0, Answer::N)];
        assert!(s.insert_all(inner_conflict).is_err());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn concurrent_writers() {
        let s = Arc::new(LabelStore::new());
        let handles: Vec<_> = (0..8)
            .map(|w| {
                let s = Arc::clone(&s);
                std::thread::spawn(move || {
                    for p in 0..100 {
                        s.insert(rec(&format!("w{w}"), p, Answer::Y)).unwrap();
                        // every writer also replays a shared record
                        s.insert(rec("shared", p, Answer::N)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(s.len(), 8 * 100 + 100);
    }
}

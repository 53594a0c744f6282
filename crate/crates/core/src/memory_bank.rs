//! Global shared memory bank.
//!
//! Teams publish admitted steps as `(summary, output)` pairs. Summaries act as
//! keys that every team can list; outputs are handed out only on an explicit
//! [`MemoryBank::retrieve`]. Every mutating operation and every read draws its
//! position from one global sequence counter held under the same lock as the
//! state, so the counter order is a valid linearization of the history.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared handle to one cached summary embedding.
pub type Embedding = Arc<[f64]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub entry_id: u64,
    pub summary: String,
    pub output: String,
    /// 1-based team index.
    pub source_team: usize,
    /// 1-based move index within the source team.
    pub source_step: usize,
    pub admit_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub entry_id: u64,
    pub consumer_team: usize,
    pub consumer_step: usize,
    pub retrieve_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankEventKind {
    Admit,
    Retrieve,
}

/// One line of the bank's event export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEvent {
    pub event: BankEventKind,
    pub seq: u64,
    pub entry_id: u64,
    pub team: usize,
    pub step: usize,
    /// Wall-clock nanoseconds since bank creation, or virtual time units when
    /// the bank runs on a virtual clock.
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admission {
    pub entry_id: u64,
    pub admit_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieved {
    pub output: String,
    pub summary: String,
    pub retrieve_seq: u64,
}

/// Point-in-time view of the key list.
///
/// `as_of_seq` is the last sequence number applied when the snapshot was
/// taken; the snapshot contains exactly the entries with `admit_seq <= as_of_seq`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeySnapshot {
    pub as_of_seq: u64,
    pub keys: Vec<(u64, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub used: bool,
    pub cross_team_used: bool,
}

#[derive(Debug)]
enum Clock {
    Wall(Instant),
    Virtual(AtomicU64),
}

impl Clock {
    fn now(&self) -> u64 {
        match self {
            Clock::Wall(origin) => origin.elapsed().as_nanos() as u64,
            Clock::Virtual(t) => t.load(Ordering::SeqCst),
        }
    }
}

#[derive(Debug, Default)]
struct BankState {
    seq: u64,
    entries: Vec<MemoryEntry>,
    key_embeddings: Vec<Embedding>,
    retrievals: Vec<RetrievalRecord>,
    events: Vec<BankEvent>,
}

/// Append-only, linearizable key-value store scoped to one episode.
#[derive(Debug)]
pub struct MemoryBank {
    dim: usize,
    clock: Clock,
    state: Mutex<BankState>,
}

impl MemoryBank {
    /// Bank whose event timestamps come from the wall clock.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            clock: Clock::Wall(Instant::now()),
            state: Mutex::default(),
        }
    }

    /// Bank whose event timestamps are set by the caller via [`Self::set_virtual_time`].
    pub fn with_virtual_clock(dim: usize) -> Self {
        Self {
            dim,
            clock: Clock::Virtual(AtomicU64::new(0)),
            state: Mutex::default(),
        }
    }

    pub fn set_virtual_time(&self, t: u64) {
        if let Clock::Virtual(v) = &self.clock {
            v.store(t, Ordering::SeqCst);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn lock(&self) -> MutexGuard<'_, BankState> {
        // A panic while holding the lock cannot leave the append-only state
        // half-written: every push happens after validation.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn admit(
        &self,
        summary: &str,
        output: &str,
        summary_embedding: Embedding,
        source_team: usize,
        source_step: usize,
    ) -> Result<Admission> {
        if summary.trim().is_empty() {
            return Err(Error::validation("memory summary must be non-empty"));
        }
        if output.trim().is_empty() {
            return Err(Error::validation("memory output must be non-empty"));
        }
        if summary_embedding.len() != self.dim {
            return Err(Error::config(format!(
                "summary embedding has dimension {}, bank expects {}",
                summary_embedding.len(),
                self.dim
            )));
        }
        if source_team == 0 || source_step == 0 {
            return Err(Error::validation("source team and step are 1-based"));
        }
        let mut st = self.lock();
        st.seq += 1;
        let admit_seq = st.seq;
        let entry_id = st.entries.len() as u64 + 1;
        st.entries.push(MemoryEntry {
            entry_id,
            summary: summary.to_owned(),
            output: output.to_owned(),
            source_team,
            source_step,
            admit_seq,
        });
        st.key_embeddings.push(summary_embedding);
        let wall_ns = self.clock.now();
        st.events.push(BankEvent {
            event: BankEventKind::Admit,
            seq: admit_seq,
            entry_id,
            team: source_team,
            step: source_step,
            wall_ns,
        });
        Ok(Admission {
            entry_id,
            admit_seq,
        })
    }

    pub fn list_keys(&self) -> KeySnapshot {
        let st = self.lock();
        KeySnapshot {
            as_of_seq: st.seq,
            keys: st
                .entries
                .iter()
                .map(|e| (e.entry_id, e.summary.clone()))
                .collect(),
        }
    }

    /// Keys and their cached embeddings taken under one lock acquisition.
    pub fn controller_snapshot(&self) -> (KeySnapshot, Vec<Embedding>) {
        let st = self.lock();
        let snap = KeySnapshot {
            as_of_seq: st.seq,
            keys: st
                .entries
                .iter()
                .map(|e| (e.entry_id, e.summary.clone()))
                .collect(),
        };
        (snap, st.key_embeddings.clone())
    }

    /// Returns the stored output verbatim and logs the retrieval.
    ///
    /// An unknown id yields [`Error::NotFound`]; callers treat it as a failed
    /// step rather than aborting.
    pub fn retrieve(
        &self,
        entry_id: u64,
        consumer_team: usize,
        consumer_step: usize,
    ) -> Result<Retrieved> {
        let mut st = self.lock();
        let idx = match entry_id.checked_sub(1) {
            Some(i) if (i as usize) < st.entries.len() => i as usize,
            _ => return Err(Error::NotFound { entry_id }),
        };
        st.seq += 1;
        let retrieve_seq = st.seq;
        st.retrievals.push(RetrievalRecord {
            entry_id,
            consumer_team,
            consumer_step,
            retrieve_seq,
        });
        let wall_ns = self.clock.now();
        st.events.push(BankEvent {
            event: BankEventKind::Retrieve,
            seq: retrieve_seq,
            entry_id,
            team: consumer_team,
            step: consumer_step,
            wall_ns,
        });
        let entry = &st.entries[idx];
        Ok(Retrieved {
            output: entry.output.clone(),
            summary: entry.summary.clone(),
            retrieve_seq,
        })
    }

    /// Current sequence counter. Used to place failed retrievals in a history.
    pub fn current_seq(&self) -> u64 {
        self.lock().seq
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<MemoryEntry> {
        self.lock().entries.clone()
    }

    pub fn key_embeddings(&self) -> Vec<Embedding> {
        self.lock().key_embeddings.clone()
    }

    pub fn retrieval_log(&self) -> Vec<RetrievalRecord> {
        self.lock().retrievals.clone()
    }

    pub fn events(&self) -> Vec<BankEvent> {
        self.lock().events.clone()
    }

    pub fn usage_sets(&self) -> BTreeMap<(usize, usize), Usage> {
        let st = self.lock();
        usage_from_log(&st.entries, &st.retrievals)
    }
}

/// Usage of each admitted step keyed by `(source_team, source_step)`.
///
/// A step is used iff at least one retrieval names its entry, and
/// cross-team used iff one of those retrievals came from another team.
pub fn usage_from_log(
    entries: &[MemoryEntry],
    retrievals: &[RetrievalRecord],
) -> BTreeMap<(usize, usize), Usage> {
    let mut by_id: BTreeMap<u64, Usage> = entries
        .iter()
        .map(|e| (e.entry_id, Usage::default()))
        .collect();
    let source: BTreeMap<u64, usize> = entries
        .iter()
        .map(|e| (e.entry_id, e.source_team))
        .collect();
    for r in retrievals {
        if let (Some(u), Some(&src)) = (by_id.get_mut(&r.entry_id), source.get(&r.entry_id)) {
            u.used = true;
            if r.consumer_team != src {
                u.cross_team_used = true;
            }
        }
    }
    entries
        .iter()
        .map(|e| ((e.source_team, e.source_step), by_id[&e.entry_id]))
        .collect()
}

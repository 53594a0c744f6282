//! Parallel team execution over a shared memory bank.

mod aggregate;
mod episode;
mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use aggregate::{normalize_answer, Aggregator, MajorityVote};
pub use episode::{run_episode, EpisodeOptions, MemorySetup, SchedulerMode};
pub use trace::{
    read_trace_events, write_trace_events, Candidate, EpisodeTrace, MoveKind, MoveRecord, Scores,
    TeamTrace, TraceEvent, TRACE_SCHEMA_VERSION,
};

use crate::controller::StepTriplet;

pub const DEFAULT_STEP_CAP: usize = 30;
pub const DEFAULT_TEAMS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub query: String,
    pub scorer_id: String,
    #[serde(default = "default_cap")]
    pub step_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_STEP_CAP
}

impl TaskSpec {
    pub fn validate(&self) -> crate::Result<()> {
        if self.query.trim().is_empty() {
            return Err(crate::Error::validation("task query must be non-empty"));
        }
        if self.step_cap == 0 {
            return Err(crate::Error::validation("step cap must be at least 1"));
        }
        Ok(())
    }
}

/// What an orchestrator chose to do next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Step(StepTriplet),
    Retrieve(u64),
    Final(String),
    /// Unparseable or otherwise unusable orchestrator output; costs a step.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedMove {
    pub mv: Move,
    /// Virtual time the move takes. Ignored by the live scheduler.
    pub cost: u64,
}

/// Observations appended to a team's history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HistoryItem {
    StepResult {
        triplet: StepTriplet,
    },
    MemoryResult {
        entry_id: u64,
        summary: String,
        output: String,
    },
    RetrievalFailed {
        entry_id: u64,
    },
    Failed {
        reason: String,
    },
}

impl fmt::Display for HistoryItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryItem::StepResult { triplet } => write!(
                f,
                "[step] instruction: {}\n[step] result: {}",
                triplet.agent_input, triplet.agent_output
            ),
            HistoryItem::MemoryResult {
                entry_id,
                summary,
                output,
            } => write!(
                f,
                "=== shared memory result #{entry_id} ===\nkey: {summary}\nvalue:\n{output}\n=== end shared memory result ==="
            ),
            HistoryItem::RetrievalFailed { entry_id } => {
                write!(f, "[memory] entry #{entry_id} does not exist")
            }
            HistoryItem::Failed { reason } => write!(f, "[failed step] {reason}"),
        }
    }
}

/// Everything a team's orchestrator sees when choosing its next move.
pub struct TeamView<'a> {
    /// 1-based.
    pub team: usize,
    /// 1-based index the next move will get.
    pub step: usize,
    pub query: &'a str,
    pub history: &'a [HistoryItem],
    pub visible_keys: &'a [(u64, String)],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError(pub String);

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BackendError {}

pub trait AgentBackend: Send {
    fn next_move(&mut self, view: &TeamView<'_>) -> Result<PlannedMove, BackendError>;
}

/// Creates one orchestrator per team.
pub trait TeamFactory: Sync {
    fn create(&self, team: usize, seed: u64) -> Box<dyn AgentBackend + '_>;
}

/// Maps an answer to a score in `[0, 1]`.
pub trait Scorer: Sync {
    fn score(&self, answer: &str) -> f64;
}

/// Team that finished first and its answer. Ties go to the lowest team index;
/// teams that failed or hit the cap are not eligible.
pub fn first_finisher(trace: &EpisodeTrace) -> Option<(usize, String)> {
    trace
        .candidates
        .iter()
        .min_by_key(|c| (c.finish_time, c.team))
        .map(|c| (c.team, c.answer.clone()))
}

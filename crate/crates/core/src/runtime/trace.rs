//! Episode traces and their line-delimited JSON event form.
//!
//! A trace file holds one or more episodes. Each episode starts with an
//! `episode` header line followed by `step`, `decision`, `final`, `admit`,
//! `retrieve` and a closing `aggregate` line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::SchedulerMode;
use crate::controller::{Action, ControllerContext, Decision, StepTriplet};
use crate::error::{Error, Result};
use crate::memory_bank::{BankEvent, BankEventKind, MemoryEntry, RetrievalRecord};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub team: usize,
    pub answer: String,
    pub finish_time: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MoveKind {
    Step {
        triplet: StepTriplet,
        /// `None` when memory is disabled.
        decision: Option<Decision>,
        entry_id: Option<u64>,
        #[serde(skip)]
        context: Option<ControllerContext>,
    },
    Retrieve {
        entry_id: u64,
        ok: bool,
    },
    Final {
        answer: String,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub step: usize,
    pub start: u64,
    pub end: u64,
    pub kind: MoveKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamTrace {
    pub team: usize,
    pub moves: Vec<MoveRecord>,
    pub candidate: Option<Candidate>,
    /// Backend error that ended this team early.
    pub failure: Option<String>,
    pub capped: bool,
    /// Clock value when the team stopped.
    pub end_time: u64,
}

impl TeamTrace {
    pub fn step_moves(&self) -> impl Iterator<Item = &MoveRecord> {
        self.moves
            .iter()
            .filter(|m| matches!(m.kind, MoveKind::Step { .. }))
    }

    /// Moves counted against the step cap.
    pub fn budgeted_moves(&self) -> usize {
        self.moves
            .iter()
            .filter(|m| !matches!(m.kind, MoveKind::Final { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub r_agg: f64,
    pub r_first: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task_id: String,
    pub query: String,
    pub k: usize,
    pub seed: u64,
    /// Admission gate label, `None` when memory is disabled.
    pub gate: Option<String>,
    pub scheduler: SchedulerMode,
    pub teams: Vec<TeamTrace>,
    pub entries: Vec<MemoryEntry>,
    pub retrievals: Vec<RetrievalRecord>,
    pub bank_events: Vec<BankEvent>,
    pub candidates: Vec<Candidate>,
    pub first_finisher: Option<usize>,
    pub answer: Option<String>,
    pub aggregate_error: Option<String>,
    /// Latest team end time.
    pub runtime: u64,
    pub scores: Option<Scores>,
}

impl EpisodeTrace {
    pub fn memory_enabled(&self) -> bool {
        self.gate.is_some()
    }

    pub fn total_moves(&self) -> usize {
        self.teams.iter().map(|t| t.budgeted_moves()).sum()
    }

    pub fn candidate_steps(&self) -> usize {
        self.teams.iter().map(|t| t.step_moves().count()).sum()
    }

    pub fn admitted(&self) -> usize {
        self.entries.len()
    }

    pub fn score_with(&mut self, scorer: &dyn super::Scorer) {
        let r_agg = self.answer.as_deref().map_or(0.0, |a| scorer.score(a));
        let r_first = super::first_finisher(self).map_or(0.0, |(_, a)| scorer.score(&a));
        self.scores = Some(Scores { r_agg, r_first });
    }

    pub fn to_events(&self, include_content: bool) -> Vec<TraceEvent> {
        let mut out = vec![TraceEvent::Episode {
            schema_version: TRACE_SCHEMA_VERSION,
            task_id: self.task_id.clone(),
            k: self.k,
            seed: self.seed,
            gate: self.gate.clone(),
            scheduler: self.scheduler,
        }];
        for t in &self.teams {
            for m in &t.moves {
                let (kind, triplet) = match &m.kind {
                    MoveKind::Step { triplet, .. } => ("step", Some(triplet)),
                    MoveKind::Retrieve { .. } => ("retrieve", None),
                    MoveKind::Final { .. } => ("final", None),
                    MoveKind::Failed { .. } => ("failed", None),
                };
                out.push(TraceEvent::Step {
                    team: t.team,
                    step: m.step,
                    kind: kind.into(),
                    start: m.start,
                    end: m.end,
                    summary: triplet
                        .filter(|_| include_content)
                        .map(|tr| tr.step_summary.clone()),
                });
                match &m.kind {
                    MoveKind::Step {
                        decision: Some(d), ..
                    } => out.push(TraceEvent::Decision {
                        team: t.team,
                        step: m.step,
                        action: d.action,
                        prob_yes: d.prob_yes,
                        log_prob: d.log_prob_action,
                        fail_closed: d.fail_closed,
                    }),
                    MoveKind::Final { answer } => out.push(TraceEvent::Final {
                        team: t.team,
                        step: m.step,
                        answer: if include_content {
                            answer.clone()
                        } else {
                            String::new()
                        },
                        finish_time: m.end,
                    }),
                    _ => {}
                }
            }
        }
        let mut bank = self.bank_events.clone();
        bank.sort_by_key(|e| e.seq);
        out.extend(bank.into_iter().map(TraceEvent::from));
        out.push(TraceEvent::Aggregate {
            answer: self
                .answer
                .clone()
                .map(|a| if include_content { a } else { String::new() }),
            first_finisher: self.first_finisher,
            runtime: self.runtime,
            total_moves: self.total_moves(),
            r_agg: self.scores.map(|s| s.r_agg),
            r_first: self.scores.map(|s| s.r_first),
            error: self.aggregate_error.clone(),
        });
        out
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", deny_unknown_fields)]
pub enum TraceEvent {
    Episode {
        schema_version: u32,
        task_id: String,
        k: usize,
        seed: u64,
        gate: Option<String>,
        scheduler: SchedulerMode,
    },
    Step {
        team: usize,
        step: usize,
        kind: String,
        start: u64,
        end: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        summary: Option<String>,
    },
    Decision {
        team: usize,
        step: usize,
        action: Action,
        prob_yes: f64,
        log_prob: f64,
        fail_closed: bool,
    },
    Final {
        team: usize,
        step: usize,
        answer: String,
        finish_time: u64,
    },
    Admit {
        seq: u64,
        entry_id: u64,
        team: usize,
        step: usize,
        wall_ns: u64,
    },
    Retrieve {
        seq: u64,
        entry_id: u64,
        team: usize,
        step: usize,
        wall_ns: u64,
    },
    Aggregate {
        answer: Option<String>,
        first_finisher: Option<usize>,
        runtime: u64,
        total_moves: usize,
        r_agg: Option<f64>,
        r_first: Option<f64>,
        error: Option<String>,
    },
}

impl From<BankEvent> for TraceEvent {
    fn from(e: BankEvent) -> Self {
        match e.event {
            BankEventKind::Admit => TraceEvent::Admit {
                seq: e.seq,
                entry_id: e.entry_id,
                team: e.team,
                step: e.step,
                wall_ns: e.wall_ns,
            },
            BankEventKind::Retrieve => TraceEvent::Retrieve {
                seq: e.seq,
                entry_id: e.entry_id,
                team: e.team,
                step: e.step,
                wall_ns: e.wall_ns,
            },
        }
    }
}

pub fn write_trace_events<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a trace file and splits it into episodes at each `episode` header.
pub fn read_trace_events(path: &Path) -> Result<Vec<Vec<TraceEvent>>> {
    let file = std::fs::File::open(path)?;
    let mut episodes: Vec<Vec<TraceEvent>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: TraceEvent = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        match ev {
            TraceEvent::Episode { schema_version, .. } => {
                if schema_version != TRACE_SCHEMA_VERSION {
                    return Err(Error::Schema {
                        line: i + 1,
                        message: format!("unsupported schema version {schema_version}"),
                    });
                }
                episodes.push(vec![ev]);
            }
            other => match episodes.last_mut() {
                Some(ep) => ep.push(other),
                None => {
                    return Err(Error::Schema {
                        line: i + 1,
                        message: "event before episode header".into(),
                    })
                }
            },
        }
    }
    Ok(episodes)
}

//! Memory selectivity and utilization statistics computed from trace events.
//!
//! Ratios pool counts over all episodes:
//!
//! * memories saved = admitted steps / controller-candidate steps
//! * memory recall = distinct admitted entries retrieved at least once / admitted entries
//! * cross-team recall = retrieval events whose consumer differs from the
//!   entry's source team / all retrieval events
//!
//! An entry-level cross-team figure (distinct entries retrieved by another
//! team / distinct entries retrieved) is reported alongside.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use report::{
    ecdf, ecdf_at, freedman_diaconis_bins, histogram, quantile, summary_table, write_report,
    HistogramBin, VariantRow,
};

use crate::error::{Error, Result};
use crate::runtime::{read_trace_events, EpisodeTrace, TraceEvent};

/// A percentage with an explicit flag for an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: usize,
    pub denominator: usize,
    /// `100 * numerator / denominator`, or 0 when undefined.
    pub pct: f64,
    pub defined: bool,
}

impl Ratio {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            Ratio {
                numerator,
                denominator,
                pct: 0.0,
                defined: false,
            }
        } else {
            Ratio {
                numerator,
                denominator,
                pct: 100.0 * numerator as f64 / denominator as f64,
                defined: true,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub episodes: usize,
    pub memories_saved: Ratio,
    pub memory_recall: Ratio,
    pub cross_team_recall: Ratio,
    pub cross_team_entry_recall: Ratio,
    /// Mean aggregated-answer score, when episodes were scored.
    pub mean_score: Option<f64>,
    pub mean_first_score: Option<f64>,
    pub mean_runtime: f64,
    pub mean_steps: f64,
    /// Per-episode total moves (steps and retrievals across teams).
    pub step_counts: Vec<usize>,
    /// Per-episode runtime samples.
    pub runtimes: Vec<u64>,
}

#[derive(Default)]
struct Tally {
    candidates: usize,
    admitted: usize,
    recalled_entries: usize,
    retrievals: usize,
    cross_retrievals: usize,
    entries_cross: usize,
    scores: Vec<f64>,
    first_scores: Vec<f64>,
    scored_all: bool,
    runtimes: Vec<u64>,
    steps: Vec<usize>,
}

fn schema(line: usize, msg: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: msg.into(),
    }
}

/// Computes metrics from parsed episodes (each starting with its header).
///
/// Error line numbers count events across all episodes, which matches file
/// lines for a single trace file.
pub fn compute_from_events(episodes: &[Vec<TraceEvent>]) -> Result<RunMetrics> {
    let mut t = Tally {
        scored_all: true,
        ..Default::default()
    };
    let mut line = 0;
    for events in episodes {
        let header_line = line + 1;
        if !matches!(events.first(), Some(TraceEvent::Episode { .. })) {
            return Err(schema(header_line, "episode does not start with a header"));
        }
        let mut source: BTreeMap<u64, usize> = BTreeMap::new();
        let mut retrieved: BTreeSet<u64> = BTreeSet::new();
        let mut retrieved_cross: BTreeSet<u64> = BTreeSet::new();
        let mut aggregate_seen = false;
        for ev in events {
            line += 1;
            match ev {
                TraceEvent::Decision { .. } => t.candidates += 1,
                TraceEvent::Admit { entry_id, team, .. } => {
                    if source.insert(*entry_id, *team).is_some() {
                        return Err(schema(line, format!("entry {entry_id} admitted twice")));
                    }
                    t.admitted += 1;
                }
                TraceEvent::Retrieve { entry_id, team, .. } => {
                    let src = *source.get(entry_id).ok_or_else(|| {
                        schema(
                            line,
                            format!("retrieval of entry {entry_id} before admission"),
                        )
                    })?;
                    t.retrievals += 1;
                    retrieved.insert(*entry_id);
                    if *team != src {
                        t.cross_retrievals += 1;
                        retrieved_cross.insert(*entry_id);
                    }
                }
                TraceEvent::Aggregate {
                    runtime,
                    total_moves,
                    r_agg,
                    r_first,
                    ..
                } => {
                    aggregate_seen = true;
                    t.runtimes.push(*runtime);
                    t.steps.push(*total_moves);
                    match (r_agg, r_first) {
                        (Some(a), Some(f)) => {
                            t.scores.push(*a);
                            t.first_scores.push(*f);
                        }
                        _ => t.scored_all = false,
                    }
                }
                _ => {}
            }
        }
        if !aggregate_seen {
            return Err(schema(header_line, "episode has no aggregate record"));
        }
        t.recalled_entries += retrieved.len();
        t.entries_cross += retrieved_cross.len();
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let n = episodes.len();
    Ok(RunMetrics {
        episodes: n,
        memories_saved: Ratio::new(t.admitted, t.candidates),
        memory_recall: Ratio::new(t.recalled_entries, t.admitted),
        cross_team_recall: Ratio::new(t.cross_retrievals, t.retrievals),
        cross_team_entry_recall: Ratio::new(t.entries_cross, t.recalled_entries),
        mean_score: (t.scored_all && n > 0).then(|| mean(&t.scores)),
        mean_first_score: (t.scored_all && n > 0).then(|| mean(&t.first_scores)),
        mean_runtime: if n == 0 {
            0.0
        } else {
            t.runtimes.iter().map(|&r| r as f64).sum::<f64>() / n as f64
        },
        mean_steps: if n == 0 {
            0.0
        } else {
            t.steps.iter().sum::<usize>() as f64 / n as f64
        },
        step_counts: t.steps,
        runtimes: t.runtimes,
    })
}

/// Metrics over trace files on disk.
pub fn compute_metrics<P: AsRef<Path>>(paths: &[P]) -> Result<RunMetrics> {
    let mut episodes = Vec::new();
    for p in paths {
        episodes.extend(read_trace_events(p.as_ref())?);
    }
    compute_from_events(&episodes)
}

/// Metrics over in-memory traces, via the same event form written to disk.
pub fn compute_from_traces(traces: &[EpisodeTrace]) -> Result<RunMetrics> {
    let episodes: Vec<Vec<TraceEvent>> = traces.iter().map(|t| t.to_events(false)).collect();
    compute_from_events(&episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Action;
    use crate::runtime::SchedulerMode;

    fn header() -> TraceEvent {
        TraceEvent::Episode {
            schema_version: 1,
            task_id: "t".into(),
            k: 3,
            seed: 0,
            gate: Some("g".into()),
            scheduler: SchedulerMode::Deterministic,
        }
    }

    fn aggregate() -> TraceEvent {
        TraceEvent::Aggregate {
            answer: None,
            first_finisher: None,
            runtime: 10,
            total_moves: 4,
            r_agg: Some(1.0),
            r_first: Some(0.5),
            error: None,
        }
    }

    fn decision() -> TraceEvent {
        TraceEvent::Decision {
            team: 1,
            step: 1,
            action: Action::No,
            prob_yes: 0.5,
            log_prob: -0.69,
            fail_closed: false,
        }
    }

    #[test]
    fn zero_admits_flag_undefined_recall() {
        let ep = vec![header(), decision(), decision(), aggregate()];
        let m = compute_from_events(&[ep]).unwrap();
        assert_eq!(m.memories_saved.pct, 0.0);
        assert!(m.memories_saved.defined);
        assert!(!m.memory_recall.defined);
        assert_eq!(m.memory_recall.pct, 0.0);
        assert!(!m.cross_team_recall.defined);
        assert_eq!(m.mean_score, Some(1.0));
    }

    #[test]
    fn retrieval_before_admission_is_schema_error() {
        let ep = vec![
            header(),
            TraceEvent::Retrieve {
                seq: 1,
                entry_id: 4,
                team: 1,
                step: 1,
                wall_ns: 0,
            },
            aggregate(),
        ];
        assert!(matches!(
            compute_from_events(&[ep]),
            Err(Error::Schema { .. })
        ));
    }
}

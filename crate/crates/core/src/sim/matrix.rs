use rayon::prelude::*;

use super::{SimScorer, SimTask, SimTeamFactory};
use crate::controller::{
    AdmissionGate, AdmissionPolicy, AlwaysNo, AlwaysYes, DecisionMode, LearnedGate, RelevanceRule,
};
use crate::embedding::EmbeddingProvider;
use crate::error::Result;
use crate::metrics::{compute_from_traces, RunMetrics};
use crate::runtime::{run_episode, EpisodeOptions, EpisodeTrace, MajorityVote, MemorySetup};
use crate::seeds::derive_seed;

/// Admission strategies compared by [`run_matrix`].
#[derive(Clone, Copy)]
pub enum Variant<'a> {
    NoMemory,
    AlwaysNo,
    AddAll,
    LlmProxy,
    /// Greedy decisions from a trained policy.
    Learned(&'a AdmissionPolicy),
}

impl Variant<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::NoMemory => "no-memory",
            Variant::AlwaysNo => "always-no",
            Variant::AddAll => "add-all",
            Variant::LlmProxy => "llm-proxy",
            Variant::Learned(_) => "learned",
        }
    }
}

/// Runs one scored episode of `task`. `gate = None` disables memory.
pub fn run_sim_episode(
    task: &SimTask,
    gate: Option<&dyn AdmissionGate>,
    provider: &dyn EmbeddingProvider,
    k: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    let factory = SimTeamFactory::new(task);
    let memory = gate.map(|gate| MemorySetup { gate, provider });
    let mut trace = run_episode(
        &task.task_spec(),
        &factory,
        memory,
        &MajorityVote,
        EpisodeOptions::deterministic(k, seed),
    )?;
    trace.score_with(&SimScorer::for_task(task));
    Ok(trace)
}

pub struct MatrixResult {
    pub label: String,
    pub metrics: RunMetrics,
    /// In task-major, seed-minor order.
    pub traces: Vec<EpisodeTrace>,
}

/// Runs every variant on every `(task, seed)` pair.
///
/// The episode seed is derived from the task seed and the run seed, so all
/// variants see the same backend randomness for a given pair.
pub fn run_matrix(
    tasks: &[SimTask],
    variants: &[Variant<'_>],
    k: usize,
    seeds: &[u64],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<MatrixResult>> {
    let pairs: Vec<(&SimTask, u64)> = tasks
        .iter()
        .flat_map(|t| seeds.iter().map(move |&s| (t, derive_seed(t.seed, &[s]))))
        .collect();
    variants
        .iter()
        .map(|v| {
            let learned;
            let gate: Option<&dyn AdmissionGate> = match v {
                Variant::NoMemory => None,
                Variant::AlwaysNo => Some(&AlwaysNo),
                Variant::AddAll => Some(&AlwaysYes),
                Variant::LlmProxy => Some(&RelevanceRule),
                Variant::Learned(policy) => {
                    learned = LearnedGate {
                        policy,
                        mode: DecisionMode::Greedy,
                    };
                    Some(&learned)
                }
            };
            let traces = pairs
                .par_iter()
                .map(|&(task, seed)| run_sim_episode(task, gate, provider, k, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(MatrixResult {
                label: v.label().to_string(),
                metrics: compute_from_traces(&traces)?,
                traces,
            })
        })
        .collect()
}

//! Episode execution.
//!
//! In [`SchedulerMode::Deterministic`] teams share one thread: the team with
//! the smallest virtual clock moves next, ties broken by a seed-derived
//! priority order. Each move advances the team's clock by the backend's
//! declared cost and takes effect on the bank immediately, so an entry is
//! visible to every team scheduled after its producer's move. Bank events are
//! stamped with the clock value at which the move ends.
//!
//! In [`SchedulerMode::Live`] each team runs on its own thread and clocks are
//! wall-clock nanoseconds since the episode started.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    AgentBackend, Aggregator, Candidate, EpisodeTrace, HistoryItem, Move, MoveKind, MoveRecord,
    TaskSpec, TeamFactory, TeamTrace, TeamView,
};
use crate::controller::{build_context_with_query, Action, AdmissionGate, GateInput};
use crate::embedding::EmbeddingProvider;
use crate::error::Result;
use crate::memory_bank::{Embedding, MemoryBank};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    Deterministic,
    Live,
}

#[derive(Clone, Copy)]
pub struct MemorySetup<'a> {
    pub gate: &'a dyn AdmissionGate,
    pub provider: &'a dyn EmbeddingProvider,
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeOptions {
    pub k: usize,
    pub seed: u64,
    pub scheduler: SchedulerMode,
}

impl EpisodeOptions {
    pub fn deterministic(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            scheduler: SchedulerMode::Deterministic,
        }
    }
}

struct Shared<'a> {
    task: &'a TaskSpec,
    memory: Option<(MemorySetup<'a>, Embedding)>,
    bank: Option<MemoryBank>,
}

struct Team<'b> {
    id: usize,
    backend: Box<dyn AgentBackend + 'b>,
    history: Vec<HistoryItem>,
    trace: TeamTrace,
    clock: u64,
    done: bool,
    gate_rng: ChaCha8Rng,
}

impl<'b> Team<'b> {
    fn new(id: usize, seed: u64, factory: &'b dyn TeamFactory) -> Self {
        Team {
            id,
            backend: factory.create(id, derive_seed(seed, &[id as u64, 0])),
            history: Vec::new(),
            trace: TeamTrace {
                team: id,
                moves: Vec::new(),
                candidate: None,
                failure: None,
                capped: false,
                end_time: 0,
            },
            clock: 0,
            done: false,
            gate_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[id as u64, 1])),
        }
    }

    fn finish(&mut self) {
        self.done = true;
        self.trace.end_time = self.clock;
    }

    /// Plays one move. `now` reads the clock for live mode; `None` means virtual time.
    fn turn(&mut self, shared: &Shared<'_>, now: Option<&dyn Fn() -> u64>) {
        let step = self.trace.moves.len() + 1;
        let keys = shared
            .bank
            .as_ref()
            .map(|b| b.list_keys().keys)
            .unwrap_or_default();
        let view = TeamView {
            team: self.id,
            step,
            query: &shared.task.query,
            history: &self.history,
            visible_keys: &keys,
        };
        let start = now.map_or(self.clock, |f| f());
        let planned = match self.backend.next_move(&view) {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(team = self.id, error = %e, "backend failed; team stops");
                self.trace.failure = Some(e.0);
                self.clock = now.map_or(self.clock, |f| f());
                self.finish();
                return;
            }
        };
        let budgeted = self.trace.budgeted_moves();
        if budgeted >= shared.task.step_cap && !matches!(planned.mv, Move::Final(_)) {
            self.trace.capped = true;
            self.finish();
            return;
        }
        if now.is_none() {
            self.clock += planned.cost;
        }
        let kind = match planned.mv {
            Move::Step(triplet) => self.step(shared, triplet, step),
            Move::Retrieve(entry_id) => {
                if let Some(bank) = &shared.bank {
                    bank.set_virtual_time(self.clock);
                }
                let res = shared
                    .bank
                    .as_ref()
                    .map(|b| b.retrieve(entry_id, self.id, step));
                match res {
                    Some(Ok(r)) => {
                        self.history.push(HistoryItem::MemoryResult {
                            entry_id,
                            summary: r.summary,
                            output: r.output,
                        });
                        MoveKind::Retrieve { entry_id, ok: true }
                    }
                    _ => {
                        self.history.push(HistoryItem::RetrievalFailed { entry_id });
                        MoveKind::Retrieve {
                            entry_id,
                            ok: false,
                        }
                    }
                }
            }
            Move::Final(answer) => MoveKind::Final { answer },
            Move::Failed(reason) => {
                self.history.push(HistoryItem::Failed {
                    reason: reason.clone(),
                });
                MoveKind::Failed { reason }
            }
        };
        if let Some(f) = now {
            self.clock = f();
        }
        let final_answer = match &kind {
            MoveKind::Final { answer } => Some(answer.clone()),
            _ => None,
        };
        self.trace.moves.push(MoveRecord {
            step,
            start,
            end: self.clock,
            kind,
        });
        if let Some(answer) = final_answer {
            self.trace.candidate = Some(Candidate {
                team: self.id,
                answer,
                finish_time: self.clock,
            });
            self.finish();
        }
    }

    fn step(&mut self, shared: &Shared<'_>, triplet: super::StepTriplet, step: usize) -> MoveKind {
        self.history.push(HistoryItem::StepResult {
            triplet: triplet.clone(),
        });
        let (Some((setup, query_emb)), Some(bank)) = (&shared.memory, &shared.bank) else {
            return MoveKind::Step {
                triplet,
                decision: None,
                entry_id: None,
                context: None,
            };
        };
        let ctx = match build_context_with_query(
            query_emb.clone(),
            bank.key_embeddings(),
            &triplet,
            setup.provider,
        ) {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!(team = self.id, error = %e, "cannot build controller context");
                let reason = format!("controller context: {e}");
                return MoveKind::Failed { reason };
            }
        };
        let decision = setup.gate.decide(
            &GateInput {
                query: &shared.task.query,
                triplet: &triplet,
                context: &ctx,
            },
            &mut self.gate_rng,
        );
        let mut entry_id = None;
        if decision.action == Action::Yes {
            bank.set_virtual_time(self.clock);
            match bank.admit(
                &triplet.step_summary,
                &triplet.agent_output,
                ctx.step[1].clone(),
                self.id,
                step,
            ) {
                Ok(a) => entry_id = Some(a.entry_id),
                Err(e) => tracing::warn!(team = self.id, error = %e, "admission rejected"),
            }
        }
        MoveKind::Step {
            triplet,
            decision: Some(decision),
            entry_id,
            context: Some(ctx),
        }
    }
}

/// Runs `options.k` teams over `task` and aggregates their candidates.
///
/// With `memory = None` no bank exists and no controller is consulted.
pub fn run_episode(
    task: &TaskSpec,
    factory: &dyn TeamFactory,
    memory: Option<MemorySetup<'_>>,
    aggregator: &dyn Aggregator,
    options: EpisodeOptions,
) -> Result<EpisodeTrace> {
    task.validate()?;
    if options.k == 0 {
        return Err(crate::Error::validation("K must be at least 1"));
    }
    let memory = match memory {
        Some(m) => {
            let q: Embedding = m.provider.embed(&task.query)?.into();
            Some((m, q))
        }
        None => None,
    };
    let bank = memory.as_ref().map(|(m, _)| match options.scheduler {
        SchedulerMode::Deterministic => MemoryBank::with_virtual_clock(m.provider.dim()),
        SchedulerMode::Live => MemoryBank::new(m.provider.dim()),
    });
    let shared = Shared { task, memory, bank };

    let mut teams: Vec<Team<'_>> = (1..=options.k)
        .map(|id| Team::new(id, options.seed, factory))
        .collect();

    match options.scheduler {
        SchedulerMode::Deterministic => {
            let mut priority: Vec<usize> = (0..options.k).collect();
            priority.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                options.seed,
                &[u64::MAX],
            )));
            let mut rank = vec![0; options.k];
            for (r, &t) in priority.iter().enumerate() {
                rank[t] = r;
            }
            while let Some(i) = (0..teams.len())
                .filter(|&i| !teams[i].done)
                .min_by_key(|&i| (teams[i].clock, rank[i]))
            {
                teams[i].turn(&shared, None);
            }
        }
        SchedulerMode::Live => {
            let origin = Instant::now();
            let now = move || origin.elapsed().as_nanos() as u64;
            std::thread::scope(|s| {
                for team in teams.iter_mut() {
                    let shared = &shared;
                    s.spawn(move || {
                        while !team.done {
                            team.turn(shared, Some(&now));
                        }
                    });
                }
            });
        }
    }

    let team_traces: Vec<TeamTrace> = teams.into_iter().map(|t| t.trace).collect();
    let candidates: Vec<Candidate> = team_traces
        .iter()
        .filter_map(|t| t.candidate.clone())
        .collect();
    let first_finisher = candidates
        .iter()
        .min_by_key(|c| (c.finish_time, c.team))
        .map(|c| c.team);
    let (answer, aggregate_error) = if candidates.is_empty() {
        (Some(String::new()), None)
    } else {
        match aggregator.aggregate(&task.query, &candidates) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let runtime = team_traces.iter().map(|t| t.end_time).max().unwrap_or(0);
    let (entries, retrievals, bank_events) = match &shared.bank {
        Some(b) => (b.entries(), b.retrieval_log(), b.events()),
        None => Default::default(),
    };
    Ok(EpisodeTrace {
        task_id: task.task_id.clone(),
        query: task.query.clone(),
        k: options.k,
        seed: options.seed,
        gate: shared.memory.as_ref().map(|(m, _)| m.gate.label()),
        scheduler: options.scheduler,
        teams: team_traces,
        entries,
        retrievals,
        bank_events,
        candidates,
        first_finisher,
        answer,
        aggregate_error,
        runtime,
        scores: None,
    })
}

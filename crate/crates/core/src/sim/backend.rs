//! Scripted orchestrators for simulated tasks.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::{format_answer, node_value, SimTask};
use crate::controller::StepTriplet;
use crate::runtime::{
    AgentBackend, BackendError, HistoryItem, Move, PlannedMove, TeamFactory, TeamView,
};
use crate::seeds::derive_seed;

/// Ground-truth role of a simulated step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLabel {
    /// Successful derivation of a node another team also needs.
    Useful,
    /// Successful derivation only its own team needs.
    Private,
    /// Attempt that produced no value.
    Failed,
    /// Plausible but wrong claim.
    Distractor,
}

const FAILED_MARK: &str = ": attempt failed";
const GUESS_PREFIX: &str = "Guess ";
const UNVERIFIED: &str = "Unverified";

/// Classifies a step from its text, using the task's ground truth.
pub fn label_step(task: &SimTask, triplet: &StepTriplet, k: usize) -> Option<StepLabel> {
    if triplet.agent_input.starts_with(GUESS_PREFIX) {
        return Some(StepLabel::Distractor);
    }
    if triplet.step_summary.ends_with(FAILED_MARK) {
        return Some(StepLabel::Failed);
    }
    let (name, _) = triplet.step_summary.split_once(" = ")?;
    let node = task.node_by_name(name)?;
    Some(if task.demand(node.id, k) >= 2 {
        StepLabel::Useful
    } else {
        StepLabel::Private
    })
}

fn unit_draw(seed: u64, path: &[u64]) -> f64 {
    (derive_seed(seed, path) >> 11) as f64 / (1u64 << 53) as f64
}

/// One team's scripted orchestrator.
///
/// Walks its required nodes in a seeded topological order. Before each
/// derivation it scans the visible keys and retrieves any entry whose key
/// asserts a value for a node it still needs. Whether a derivation attempt
/// fails is a pure function of `(seed, node, attempt)`, so skipping nodes via
/// memory never perturbs the outcome of other attempts.
pub struct ScriptedTeam<'a> {
    task: &'a SimTask,
    team: usize,
    seed: u64,
    reuse: bool,
    order: Vec<usize>,
    required: BTreeSet<usize>,
    known: BTreeMap<usize, String>,
    attempts: BTreeMap<usize, u64>,
    seen_history: usize,
    tried_entries: HashSet<u64>,
    pending_distractors: Vec<usize>,
    polluted: bool,
}

impl<'a> ScriptedTeam<'a> {
    pub fn new(task: &'a SimTask, team: usize, seed: u64, reuse: bool) -> Self {
        let required = task.required_nodes(team);
        let order = topo_order(task, &required, &mut ChaCha8Rng::seed_from_u64(seed));
        let owner = task.owner_of_team(team);
        let pending_distractors = (0..task.distractors.len())
            .filter(|&i| task.distractors[i].owner == owner)
            .collect();
        Self {
            task,
            team,
            seed,
            reuse,
            order,
            required,
            known: BTreeMap::new(),
            attempts: BTreeMap::new(),
            seen_history: 0,
            tried_entries: HashSet::new(),
            pending_distractors,
            polluted: false,
        }
    }

    pub fn team(&self) -> usize {
        self.team
    }

    pub fn is_polluted(&self) -> bool {
        self.polluted
    }

    fn cost(&self, base: u64) -> u64 {
        if self.polluted {
            base + self.task.params.costs.pollution
        } else {
            base
        }
    }

    fn ingest(&mut self, history: &[HistoryItem]) {
        for item in &history[self.seen_history..] {
            if let HistoryItem::MemoryResult {
                summary, output, ..
            } = item
            {
                let Some((name, _)) = summary.split_once(" = ") else {
                    continue;
                };
                let Some(node) = self.task.node_by_name(name) else {
                    continue;
                };
                let Some(value) = output
                    .rsplit_once("value=")
                    .map(|(_, v)| v.trim().to_string())
                else {
                    continue;
                };
                if output.contains(UNVERIFIED) {
                    self.polluted = true;
                }
                self.known.entry(node.id).or_insert(value);
            }
        }
        self.seen_history = history.len();
    }

    fn derive_text(&self, node: usize) -> String {
        let n = &self.task.nodes[node];
        if n.prereqs.is_empty() {
            format!("Derive {} from primary sources", n.name)
        } else {
            let names: Vec<&str> = n
                .prereqs
                .iter()
                .map(|&p| self.task.nodes[p].name.as_str())
                .collect();
            format!("Derive {} from {}", n.name, names.join(" and "))
        }
    }

    fn answer(&self) -> String {
        let values: Vec<(String, String)> = self
            .task
            .answer_fields
            .iter()
            .map(|f| {
                let v = if f.key == "status" {
                    "done".to_string()
                } else {
                    self.task
                        .node_by_name(&f.key)
                        .and_then(|n| self.known.get(&n.id).cloned())
                        .unwrap_or_default()
                };
                (f.key.clone(), v)
            })
            .collect();
        format_answer(values.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

fn topo_order(task: &SimTask, required: &BTreeSet<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut done: BTreeSet<usize> = BTreeSet::new();
    let mut order = Vec::with_capacity(required.len());
    while order.len() < required.len() {
        let ready: Vec<usize> = required
            .iter()
            .copied()
            .filter(|n| !done.contains(n))
            .filter(|&n| task.nodes[n].prereqs.iter().all(|p| done.contains(p)))
            .collect();
        let &next = ready
            .choose(rng)
            .expect("required set is prerequisite-closed");
        done.insert(next);
        order.push(next);
    }
    order
}

impl AgentBackend for ScriptedTeam<'_> {
    fn next_move(&mut self, view: &TeamView<'_>) -> Result<PlannedMove, BackendError> {
        self.ingest(view.history);
        let costs = self.task.params.costs;

        if let Some(pos) = self
            .pending_distractors
            .iter()
            .position(|&i| self.task.distractors[i].at_step <= view.step)
        {
            let d = &self.task.distractors[self.pending_distractors.remove(pos)];
            let name = &self.task.nodes[d.target].name;
            return Ok(PlannedMove {
                mv: Move::Step(StepTriplet {
                    agent_input: format!("{GUESS_PREFIX}{name} from partial evidence"),
                    step_summary: format!("{name} = {}", d.wrong_value),
                    agent_output: format!(
                        "{UNVERIFIED} estimate for {name}, not cross-checked. value={}",
                        d.wrong_value
                    ),
                }),
                cost: self.cost(costs.solve),
            });
        }

        if self.reuse {
            for (entry_id, key) in view.visible_keys {
                if self.tried_entries.contains(entry_id) {
                    continue;
                }
                let Some((name, _)) = key.split_once(" = ") else {
                    continue;
                };
                let Some(node) = self.task.node_by_name(name) else {
                    continue;
                };
                if self.required.contains(&node.id) && !self.known.contains_key(&node.id) {
                    self.tried_entries.insert(*entry_id);
                    return Ok(PlannedMove {
                        mv: Move::Retrieve(*entry_id),
                        cost: self.cost(costs.retrieve),
                    });
                }
            }
        }

        let Some(&node) = self.order.iter().find(|n| !self.known.contains_key(n)) else {
            return Ok(PlannedMove {
                mv: Move::Final(self.answer()),
                cost: 0,
            });
        };
        let attempt = self.attempts.entry(node).or_insert(0);
        *attempt += 1;
        let failed = unit_draw(self.seed, &[node as u64, *attempt]) < self.task.params.p_fail;
        let name = self.task.nodes[node].name.clone();
        let triplet = if failed {
            StepTriplet {
                agent_input: self.derive_text(node),
                step_summary: format!("{name}{FAILED_MARK}"),
                agent_output: format!(
                    "Error: source lookup timed out while deriving {name}; no value obtained."
                ),
            }
        } else {
            let inputs: Vec<String> = self.task.nodes[node]
                .prereqs
                .iter()
                .map(|p| self.known[p].clone())
                .collect();
            let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
            let value = node_value(self.task.seed, node, &refs);
            self.known.insert(node, value.clone());
            StepTriplet {
                agent_input: self.derive_text(node),
                step_summary: format!("{name} = {value}"),
                agent_output: format!(
                    "Derivation of {name} complete and cross-checked against sources. value={value}"
                ),
            }
        };
        Ok(PlannedMove {
            mv: Move::Step(triplet),
            cost: self.cost(costs.solve),
        })
    }
}

/// Creates [`ScriptedTeam`]s for one task.
pub struct SimTeamFactory<'a> {
    pub task: &'a SimTask,
    /// Whether teams read shared memory at all.
    pub reuse: bool,
}

impl<'a> SimTeamFactory<'a> {
    pub fn new(task: &'a SimTask) -> Self {
        Self { task, reuse: true }
    }
}

impl TeamFactory for SimTeamFactory<'_> {
    fn create(&self, team: usize, seed: u64) -> Box<dyn AgentBackend + '_> {
        Box::new(ScriptedTeam::new(self.task, team, seed, self.reuse))
    }
}

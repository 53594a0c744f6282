use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a64;
use crate::error::{Error, Result};
use crate::runtime::{TaskSpec, DEFAULT_STEP_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimCosts {
    pub solve: u64,
    pub retrieve: u64,
    /// Added to every later move of a team that consumed a distractor.
    pub pollution: u64,
}

impl Default for SimCosts {
    fn default() -> Self {
        Self {
            solve: 10,
            retrieve: 1,
            pollution: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub depth: usize,
    pub width: usize,
    pub overlap_count: usize,
    pub distractor_count: usize,
    /// Number of private-path owners; team `k` follows owner `(k - 1) % teams`.
    pub teams: usize,
    pub p_fail: f64,
    pub costs: SimCosts,
    pub step_cap: usize,
    /// All-or-nothing scoring instead of weighted partial credit.
    pub binary_score: bool,
}

impl SimParams {
    pub fn new(depth: usize, width: usize, overlap_count: usize, distractor_count: usize) -> Self {
        Self {
            depth,
            width,
            overlap_count,
            distractor_count,
            teams: 3,
            p_fail: 0.15,
            costs: SimCosts::default(),
            step_cap: DEFAULT_STEP_CAP,
            binary_score: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNode {
    pub id: usize,
    pub name: String,
    pub layer: usize,
    pub prereqs: Vec<usize>,
    /// `None` for overlap nodes, otherwise the private-path owner.
    pub owner: Option<usize>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub owner: usize,
    /// 1-based move index at which the owner emits it.
    pub at_step: usize,
    pub target: usize,
    pub wrong_value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerField {
    pub key: String,
    pub value: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub task_id: String,
    pub seed: u64,
    pub params: SimParams,
    pub nodes: Vec<SimNode>,
    pub overlap: Vec<usize>,
    pub distractors: Vec<Distractor>,
    pub answer_fields: Vec<AnswerField>,
    pub query: String,
}

pub(crate) fn node_value(seed: u64, node: usize, inputs: &[&str]) -> String {
    let mut s = format!("{seed}/{node}");
    for i in inputs {
        s.push('/');
        s.push_str(i);
    }
    format!("v{:04}", fnv1a64(s.as_bytes()) % 10_000)
}

/// Builds a reproducible task.
///
/// The core DAG has `depth` layers of `width` nodes; edges only run from one
/// layer to the next. `overlap_count` nodes are required by every team and
/// form a prerequisite-closed set. Every other node belongs to one private
/// path and depends only on overlap nodes or nodes of the same path.
pub fn generate_task(seed: u64, params: &SimParams) -> Result<SimTask> {
    let SimParams {
        depth,
        width,
        overlap_count,
        distractor_count,
        teams,
        ..
    } = *params;
    if depth == 0 || width == 0 {
        return Err(Error::validation("depth and width must be at least 1"));
    }
    if teams == 0 {
        return Err(Error::validation("teams must be at least 1"));
    }
    let total = depth * width;
    if overlap_count > total {
        return Err(Error::validation(format!(
            "overlap_count {overlap_count} exceeds the {total} DAG nodes"
        )));
    }
    if distractor_count > 0 && overlap_count == 0 {
        return Err(Error::validation(
            "distractors need at least one overlap node",
        ));
    }
    if !(0.0..1.0).contains(&params.p_fail) {
        return Err(Error::validation("p_fail must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ids: Vec<usize> = (0..total).collect();
    ids.shuffle(&mut rng);
    let overlap_set: BTreeSet<usize> = ids[..overlap_count].iter().copied().collect();
    let owners: Vec<Option<usize>> = (0..total)
        .map(|i| {
            if overlap_set.contains(&i) {
                None
            } else {
                Some(rng.random_range(0..teams))
            }
        })
        .collect();

    let mut nodes: Vec<SimNode> = Vec::with_capacity(total);
    for id in 0..total {
        let layer = id / width;
        let prereqs = if layer == 0 {
            Vec::new()
        } else {
            let eligible: Vec<usize> = ((layer - 1) * width..layer * width)
                .filter(|&p| match owners[id] {
                    None => owners[p].is_none(),
                    Some(o) => owners[p].is_none() || owners[p] == Some(o),
                })
                .collect();
            let want = rng.random_range(1..=2).min(eligible.len());
            let mut chosen: Vec<usize> =
                eligible.choose_multiple(&mut rng, want).copied().collect();
            chosen.sort_unstable();
            chosen
        };
        let name = match owners[id] {
            None => format!("fact-{id}"),
            Some(_) => format!("aux-{id}"),
        };
        let inputs: Vec<&str> = prereqs.iter().map(|&p| nodes[p].value.as_str()).collect();
        let value = node_value(seed, id, &inputs);
        nodes.push(SimNode {
            id,
            name,
            layer,
            prereqs,
            owner: owners[id],
            value,
        });
    }

    let overlap: Vec<usize> = overlap_set.iter().copied().collect();
    let mut distractors = Vec::with_capacity(distractor_count);
    for i in 0..distractor_count {
        let target = *overlap.choose(&mut rng).expect("overlap non-empty");
        let mut wrong_value = node_value(seed ^ 0xd15_7ac7, target, &[&i.to_string()]);
        if wrong_value == nodes[target].value {
            wrong_value = format!("{wrong_value}x");
        }
        distractors.push(Distractor {
            owner: i % teams,
            at_step: rng.random_range(1..=3),
            target,
            wrong_value,
        });
    }

    let mut answer_fields: Vec<AnswerField> = overlap
        .iter()
        .map(|&id| AnswerField {
            key: nodes[id].name.clone(),
            value: nodes[id].value.clone(),
            weight: rng.random_range(1..=3) as f64,
        })
        .collect();
    answer_fields.push(AnswerField {
        key: "status".into(),
        value: "done".into(),
        weight: 1.0,
    });

    let facts: Vec<&str> = overlap.iter().map(|&i| nodes[i].name.as_str()).collect();
    let task_id = format!("sim-{seed:016x}");
    let query = if facts.is_empty() {
        format!("Task {task_id}: complete the assigned analysis and report status.")
    } else {
        format!(
            "Task {task_id}: determine the values of {} and report status.",
            facts.join(", ")
        )
    };

    Ok(SimTask {
        task_id,
        seed,
        params: params.clone(),
        nodes,
        overlap,
        distractors,
        answer_fields,
        query,
    })
}

impl SimTask {
    pub fn owner_of_team(&self, team: usize) -> usize {
        (team - 1) % self.params.teams
    }

    /// Nodes team `team` (1-based) must know before answering.
    pub fn required_nodes(&self, team: usize) -> BTreeSet<usize> {
        let owner = self.owner_of_team(team);
        self.nodes
            .iter()
            .filter(|n| n.owner.is_none() || n.owner == Some(owner))
            .map(|n| n.id)
            .collect()
    }

    /// Number of teams (out of `k`) whose path contains `node`.
    pub fn demand(&self, node: usize, k: usize) -> usize {
        (1..=k)
            .filter(|&t| self.required_nodes(t).contains(&node))
            .count()
    }

    pub fn node_by_name(&self, name: &str) -> Option<&SimNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn answer_key(&self) -> String {
        format_answer(
            self.answer_fields
                .iter()
                .map(|f| (f.key.as_str(), f.value.as_str())),
        )
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            task_id: self.task_id.clone(),
            query: self.query.clone(),
            scorer_id: if self.params.binary_score {
                "sim-binary".into()
            } else {
                "sim-weighted".into()
            },
            step_cap: self.params.step_cap,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: SimTask = serde_json::from_str(s)?;
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        for n in &self.nodes {
            if n.prereqs
                .iter()
                .any(|&p| p >= self.nodes.len() || self.nodes[p].layer >= n.layer)
            {
                return Err(Error::validation(format!(
                    "node {} has an invalid prerequisite",
                    n.id
                )));
            }
        }
        Ok(())
    }
}

pub fn format_answer<'a>(fields: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    fields
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn parse_answer(answer: &str) -> BTreeMap<String, String> {
    answer
        .split(';')
        .filter_map(|part| {
            let (k, v) = part.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

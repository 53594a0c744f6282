use serde::{Deserialize, Serialize};

use crate::controller::Action;
use crate::error::{Error, Result};
use crate::memory_bank::usage_from_log;
use crate::runtime::{EpisodeTrace, MoveKind};

/// `(R_i - mean) / (std + eps)` with the population standard deviation.
pub fn group_advantage(rewards: &[f64], eps: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::validation(format!(
            "group advantage needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::validation("eps must be positive"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    Ok(rewards.iter().map(|r| (r - mean) / (sd + eps)).collect())
}

/// Advantage of one admission decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAdvantage {
    pub team: usize,
    pub step: usize,
    pub action: Action,
    pub admitted: bool,
    pub used: bool,
    pub advantage: f64,
}

/// Per-decision advantages for one trace: `a_base + beta` for admitted steps
/// that some team later retrieved when `r_total > 0`, `a_base` otherwise.
///
/// Steps are listed team by team in move order.
pub fn shaped_advantages(
    trace: &EpisodeTrace,
    a_base: f64,
    beta: f64,
    r_total: f64,
) -> Vec<StepAdvantage> {
    let usage = usage_from_log(&trace.entries, &trace.retrievals);
    let mut out = Vec::new();
    for t in &trace.teams {
        for m in &t.moves {
            let MoveKind::Step {
                decision: Some(d),
                entry_id,
                ..
            } = &m.kind
            else {
                continue;
            };
            let admitted = entry_id.is_some();
            let used = admitted && usage.get(&(t.team, m.step)).is_some_and(|u| u.used);
            let bonus = if used && r_total > 0.0 { beta } else { 0.0 };
            out.push(StepAdvantage {
                team: t.team,
                step: m.step,
                action: d.action,
                admitted,
                used,
                advantage: a_base + bonus,
            });
        }
    }
    out
}

/// Base and shaped advantages for one group of rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageTable {
    pub a_base: Vec<f64>,
    pub shaped: Vec<Vec<StepAdvantage>>,
    pub beta: f64,
    pub eps: f64,
}

impl AdvantageTable {
    pub fn build(traces: &[EpisodeTrace], rewards: &[f64], beta: f64, eps: f64) -> Result<Self> {
        if traces.len() != rewards.len() {
            return Err(Error::validation("one reward per trace required"));
        }
        let a_base = group_advantage(rewards, eps)?;
        let shaped = traces
            .iter()
            .zip(&a_base)
            .zip(rewards)
            .map(|((t, &a), &r)| shaped_advantages(t, a, beta, r))
            .collect();
        Ok(Self {
            a_base,
            shaped,
            beta,
            eps,
        })
    }
}

use serde::{Deserialize, Serialize};

use crate::controller::{
    log_prob_accumulate, prob_yes, Action, AdmissionPolicy, ControllerContext,
};
use crate::error::{Error, Result};

/// `sum_t -log_prob_t * advantage_t`.
pub fn policy_loss(log_probs: &[f64], advantages: &[f64]) -> Result<f64> {
    if log_probs.len() != advantages.len() {
        return Err(Error::validation(format!(
            "{} log-probabilities but {} advantages",
            log_probs.len(),
            advantages.len()
        )));
    }
    Ok(log_probs
        .iter()
        .zip(advantages)
        .map(|(lp, a)| -lp * a)
        .sum())
}

/// `sum_t P(YES | c_t)`.
pub fn sparsity_loss(prob_yes: &[f64]) -> f64 {
    prob_yes.iter().sum()
}

/// One step's share of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub log_prob: f64,
    pub advantage: f64,
    pub prob_yes: f64,
    /// Importance weight applied to the policy term (1 when disabled).
    pub weight: f64,
    /// `-weight * advantage * log_prob + lambda_sparse * prob_yes`, before batch averaging.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub policy_loss: f64,
    pub sparsity_loss: f64,
    pub lambda_sparse: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_step: Vec<StepLoss>,
}

pub fn total_loss(policy_loss: f64, sparsity_loss: f64, lambda_sparse: f64) -> LossTerms {
    LossTerms {
        policy_loss,
        sparsity_loss,
        lambda_sparse,
        total: policy_loss + lambda_sparse * sparsity_loss,
        per_step: Vec::new(),
    }
}

/// A stored admission decision with its fixed advantage.
#[derive(Debug, Clone)]
pub struct TrainingStep {
    pub context: ControllerContext,
    pub action: Action,
    pub advantage: f64,
    /// Log-probability of `action` when it was sampled.
    pub behaviour_log_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda_sparse: f64,
    /// Temperature of the log-probability inside the policy term.
    pub loss_temperature: f64,
    /// Reweight replayed steps by `pi_now / pi_behaviour` at this sampling
    /// temperature (no gradient through the weight).
    pub importance_temperature: Option<f64>,
}

/// Batch objective: per-trace sums averaged over traces.
///
/// When `grad` is given it receives (overwrites) the gradient.
pub fn batch_objective(
    policy: &AdmissionPolicy,
    traces: &[&[TrainingStep]],
    cfg: ObjectiveConfig,
    mut grad: Option<&mut [f64]>,
) -> LossTerms {
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let n = traces.len().max(1) as f64;
    let mut per_step = Vec::new();
    let mut scratch = vec![
        0.0;
        if grad.is_some() {
            0
        } else {
            policy.num_params()
        }
    ];
    for steps in traces {
        for s in steps.iter() {
            let weight = match cfg.importance_temperature {
                Some(t) => {
                    let p = prob_yes(policy.logits(&s.context), t);
                    let now = match s.action {
                        Action::Yes => p,
                        Action::No => 1.0 - p,
                    };
                    now / s.behaviour_log_prob.exp()
                }
                None => 1.0,
            };
            let lp_weight = -weight * s.advantage / n;
            let yes_weight = cfg.lambda_sparse / n;
            let terms = match grad.as_deref_mut() {
                Some(g) => log_prob_accumulate(
                    policy,
                    &s.context,
                    s.action,
                    cfg.loss_temperature,
                    lp_weight,
                    yes_weight,
                    g,
                ),
                None => log_prob_accumulate(
                    policy,
                    &s.context,
                    s.action,
                    cfg.loss_temperature,
                    0.0,
                    0.0,
                    &mut scratch,
                ),
            };
            per_step.push(StepLoss {
                log_prob: terms.log_prob,
                advantage: s.advantage,
                prob_yes: terms.prob_yes,
                weight,
                contribution: -weight * s.advantage * terms.log_prob
                    + cfg.lambda_sparse * terms.prob_yes,
            });
        }
    }
    let pl: f64 = per_step
        .iter()
        .map(|s| -s.weight * s.advantage * s.log_prob)
        .sum::<f64>()
        / n;
    let sl: f64 = per_step.iter().map(|s| s.prob_yes).sum::<f64>() / n;
    LossTerms {
        per_step,
        ..total_loss(pl, sl, cfg.lambda_sparse)
    }
}

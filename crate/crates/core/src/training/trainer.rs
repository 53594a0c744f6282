//! Epoch loop: grouped rollouts, advantages, replayed updates.
//!
//! Each epoch rolls out `group_size` sampled episodes per task (in parallel
//! across tasks), then runs `replay_factor` passes over the stored decisions.
//! One optimizer update is taken per task group, in a seeded order that is
//! reshuffled every pass. Actions and advantages stay fixed during replay;
//! log-probabilities are recomputed under the current parameters.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    batch_objective, episode_reward, AdamW, AdvantageTable, ObjectiveConfig, TrainConfig,
    TrainingStep,
};
use crate::controller::{
    save_checkpoint, Action, AdmissionGate, AdmissionPolicy, DecisionMode, LearnedGate,
};
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::runtime::{EpisodeTrace, MoveKind, Scorer};
use crate::seeds::derive_seed;
use crate::sim::{run_sim_episode, SimScorer, SimTask};

/// A training input that can be rolled out under a gate and scored.
pub trait RolloutTask: Sync {
    fn task_id(&self) -> &str;

    fn rollout(
        &self,
        gate: &dyn AdmissionGate,
        provider: &dyn EmbeddingProvider,
        k: usize,
        seed: u64,
    ) -> Result<EpisodeTrace>;

    fn scorer(&self) -> Box<dyn Scorer + '_>;
}

impl RolloutTask for SimTask {
    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn rollout(
        &self,
        gate: &dyn AdmissionGate,
        provider: &dyn EmbeddingProvider,
        k: usize,
        seed: u64,
    ) -> Result<EpisodeTrace> {
        run_sim_episode(self, Some(gate), provider, k, seed)
    }

    fn scorer(&self) -> Box<dyn Scorer + '_> {
        Box::new(SimScorer::for_task(self))
    }
}

/// Rollouts of one task with their fixed advantages.
#[derive(Debug, Clone)]
pub struct GroupBatch {
    pub task_id: String,
    pub rewards: Vec<super::RewardBreakdown>,
    pub advantages: AdvantageTable,
    /// Decisions per trace, aligned with `advantages.shaped`.
    pub steps: Vec<Vec<TrainingStep>>,
}

impl GroupBatch {
    pub fn decisions(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn admissions(&self) -> usize {
        self.steps
            .iter()
            .flatten()
            .filter(|s| s.action == Action::Yes)
            .count()
    }
}

/// Collects `(context, action, log_prob)` for every controller decision in
/// the same order as [`super::shaped_advantages`].
fn decisions_of(
    trace: &EpisodeTrace,
) -> Result<Vec<(crate::controller::ControllerContext, Action, f64)>> {
    let mut out = Vec::new();
    for t in &trace.teams {
        for m in &t.moves {
            if let MoveKind::Step {
                decision: Some(d),
                context,
                ..
            } = &m.kind
            {
                let ctx = context.clone().ok_or_else(|| {
                    Error::validation(
                        "trace lacks controller contexts; it was not produced in-process",
                    )
                })?;
                out.push((ctx, d.action, d.log_prob_action));
            }
        }
    }
    Ok(out)
}

/// Builds a group from scored rollouts of one task.
pub fn build_group(
    task_id: &str,
    traces: &[EpisodeTrace],
    scorer: &dyn Scorer,
    config: &TrainConfig,
) -> Result<GroupBatch> {
    let rewards = traces
        .iter()
        .map(|t| episode_reward(t, scorer, config.lambda_first))
        .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = rewards.iter().map(|r| r.r_total).collect();
    let advantages = AdvantageTable::build(traces, &totals, config.beta, config.eps)?;
    let mut steps = Vec::with_capacity(traces.len());
    for (trace, shaped) in traces.iter().zip(&advantages.shaped) {
        let decisions = decisions_of(trace)?;
        debug_assert_eq!(decisions.len(), shaped.len());
        steps.push(
            decisions
                .into_iter()
                .zip(shaped)
                .map(|((context, action, lp), adv)| TrainingStep {
                    context,
                    action,
                    advantage: adv.advantage,
                    behaviour_log_prob: lp,
                })
                .collect(),
        );
    }
    Ok(GroupBatch {
        task_id: task_id.to_string(),
        rewards,
        advantages,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_r_agg: f64,
    pub mean_r_first: f64,
    /// Fraction of sampled decisions that were YES.
    pub admission_rate: f64,
    pub decisions: usize,
    /// Mean batch objective in the first and last replay pass.
    pub loss_first_pass: f64,
    pub loss_last_pass: f64,
    pub policy_loss_last_pass: f64,
    pub sparsity_loss_last_pass: f64,
    pub mean_grad_norm: f64,
    pub updates: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochReport>,
    /// Set when training stopped on a non-finite loss or parameter.
    pub aborted: Option<String>,
}

impl TrainingReport {
    /// One JSON object per epoch, then a summary line if training aborted.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        if let Some(reason) = &self.aborted {
            serde_json::to_writer(&mut w, &serde_json::json!({ "aborted": reason }))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Final parameters, or the last finite ones when training aborted.
    pub policy: AdmissionPolicy,
    pub report: TrainingReport,
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Trains `policy` on `tasks`. Checkpoints go to `checkpoint_dir` when given.
pub fn train<T: RolloutTask>(
    mut policy: AdmissionPolicy,
    tasks: &[T],
    config: &TrainConfig,
    provider: &dyn EmbeddingProvider,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::validation("training needs at least one task"));
    }
    if provider.dim() != policy.shape().d_e {
        return Err(Error::config(format!(
            "embedding provider has d_e={}, policy expects {}",
            provider.dim(),
            policy.shape().d_e
        )));
    }
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let objective = ObjectiveConfig {
        lambda_sparse: config.lambda_sparse,
        loss_temperature: config.loss_temperature,
        importance_temperature: config
            .importance_weighting
            .then_some(config.sample_temperature),
    };
    let mut opt = AdamW::new(config.optimizer, policy.num_params());
    let mut grad = vec![0.0; policy.num_params()];
    let mut report = TrainingReport::default();

    for epoch in 1..=config.epochs {
        let groups: Vec<GroupBatch> = {
            let gate = LearnedGate {
                policy: &policy,
                mode: DecisionMode::Sampled {
                    temperature: config.sample_temperature,
                },
            };
            tasks
                .par_iter()
                .enumerate()
                .map(|(ti, task)| {
                    let traces = (0..config.group_size)
                        .map(|g| {
                            let seed =
                                derive_seed(config.seed, &[epoch as u64, ti as u64, g as u64]);
                            task.rollout(&gate, provider, config.k, seed)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    build_group(task.task_id(), &traces, task.scorer().as_ref(), config)
                })
                .collect::<Result<Vec<_>>>()?
        };

        let n_traces = (groups.len() * config.group_size) as f64;
        let mean = |f: &dyn Fn(&super::RewardBreakdown) -> f64| {
            groups.iter().flat_map(|g| &g.rewards).map(f).sum::<f64>() / n_traces
        };
        let decisions: usize = groups.iter().map(GroupBatch::decisions).sum();
        let admissions: usize = groups.iter().map(GroupBatch::admissions).sum();
        let mut rec = EpochReport {
            epoch,
            mean_reward: mean(&|r| r.r_total),
            mean_r_agg: mean(&|r| r.r_agg),
            mean_r_first: mean(&|r| r.r_first),
            admission_rate: if decisions == 0 {
                0.0
            } else {
                admissions as f64 / decisions as f64
            },
            decisions,
            loss_first_pass: 0.0,
            loss_last_pass: 0.0,
            policy_loss_last_pass: 0.0,
            sparsity_loss_last_pass: 0.0,
            mean_grad_norm: 0.0,
            updates: 0,
            checkpoint: None,
        };

        let mut order: Vec<usize> = (0..groups.len()).collect();
        let mut norm_sum = 0.0;
        let mut updates = 0u64;
        for pass in 0..config.replay_factor {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                config.seed,
                &[epoch as u64, pass as u64, u64::MAX],
            )));
            let (mut total, mut pl, mut sl) = (0.0, 0.0, 0.0);
            for &gi in &order {
                let batch: Vec<&[TrainingStep]> =
                    groups[gi].steps.iter().map(Vec::as_slice).collect();
                let terms = batch_objective(&policy, &batch, objective, Some(&mut grad));
                if !terms.total.is_finite() || !all_finite(&grad) {
                    return abort(
                        policy,
                        report,
                        checkpoint_dir,
                        provider,
                        epoch,
                        "non-finite loss or gradient",
                    );
                }
                let before = policy.params().to_vec();
                norm_sum += opt.step(policy.params_mut(), &mut grad);
                updates += 1;
                if !all_finite(policy.params()) {
                    policy.params_mut().copy_from_slice(&before);
                    return abort(
                        policy,
                        report,
                        checkpoint_dir,
                        provider,
                        epoch,
                        "non-finite parameters",
                    );
                }
                total += terms.total;
                pl += terms.policy_loss;
                sl += terms.sparsity_loss;
            }
            let g = groups.len() as f64;
            if pass == 0 {
                rec.loss_first_pass = total / g;
            }
            rec.loss_last_pass = total / g;
            rec.policy_loss_last_pass = pl / g;
            rec.sparsity_loss_last_pass = sl / g;
        }
        rec.updates = updates;
        rec.mean_grad_norm = norm_sum / updates.max(1) as f64;
        if let Some(dir) = checkpoint_dir {
            let p = dir.join(format!("epoch-{epoch}.json"));
            save_checkpoint(&p, &policy, &provider.id(), Some(epoch))?;
            rec.checkpoint = Some(p);
        }
        tracing::info!(
            epoch,
            mean_reward = rec.mean_reward,
            admission_rate = rec.admission_rate,
            loss = rec.loss_last_pass,
            "epoch finished"
        );
        report.epochs.push(rec);
    }
    Ok(TrainOutcome { policy, report })
}

fn abort(
    policy: AdmissionPolicy,
    mut report: TrainingReport,
    checkpoint_dir: Option<&Path>,
    provider: &dyn EmbeddingProvider,
    epoch: usize,
    reason: &str,
) -> Result<TrainOutcome> {
    tracing::error!(epoch, reason, "training diverged");
    if let Some(dir) = checkpoint_dir {
        save_checkpoint(
            &dir.join("last-finite.json"),
            &policy,
            &provider.id(),
            Some(epoch),
        )?;
    }
    report.aborted = Some(format!("epoch {epoch}: {reason}"));
    Ok(TrainOutcome { policy, report })
}

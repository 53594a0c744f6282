//! Group-relative, usage-shaped policy-gradient training of the admission policy.

mod advantage;
mod config;
mod loss;
mod optim;
mod reward;
mod trainer;

pub use advantage::{group_advantage, shaped_advantages, AdvantageTable, StepAdvantage};
pub use config::TrainConfig;
pub use loss::{
    batch_objective, policy_loss, sparsity_loss, total_loss, LossTerms, ObjectiveConfig, StepLoss,
    TrainingStep,
};
pub use optim::{AdamW, OptimizerConfig};
pub use reward::{episode_reward, RewardBreakdown};
pub use trainer::{
    build_group, train, EpochReport, GroupBatch, RolloutTask, TrainOutcome, TrainingReport,
};

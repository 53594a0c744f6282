use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OptimizerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Rollouts per task per epoch (G).
    pub group_size: usize,
    pub epochs: usize,
    /// Optimization passes over each epoch's stored rollouts.
    pub replay_factor: usize,
    /// Usage bonus added to admitted-and-retrieved steps of rewarded episodes.
    pub beta: f64,
    pub lambda_sparse: f64,
    pub lambda_first: f64,
    pub sample_temperature: f64,
    /// Temperature inside the loss log-probability.
    pub loss_temperature: f64,
    /// Reweight replayed steps by the current/behaviour probability ratio.
    pub importance_weighting: bool,
    pub eps: f64,
    /// Teams per episode (K).
    pub k: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 5,
            epochs: 5,
            replay_factor: 10,
            beta: 0.25,
            lambda_sparse: 0.05,
            lambda_first: 1.0,
            sample_temperature: 1.2,
            loss_temperature: 1.0,
            importance_weighting: false,
            eps: 1e-8,
            k: crate::runtime::DEFAULT_TEAMS,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::config(msg)) };
        check(self.group_size >= 2, "group_size must be at least 2")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(self.replay_factor >= 1, "replay_factor must be at least 1")?;
        check(self.k >= 1, "k must be at least 1")?;
        check(self.beta.is_finite(), "beta must be finite")?;
        check(
            self.lambda_sparse >= 0.0 && self.lambda_sparse.is_finite(),
            "lambda_sparse must be >= 0",
        )?;
        check(
            self.lambda_first >= 0.0 && self.lambda_first.is_finite(),
            "lambda_first must be >= 0",
        )?;
        check(
            self.sample_temperature > 0.0,
            "sample_temperature must be positive",
        )?;
        check(
            self.loss_temperature > 0.0,
            "loss_temperature must be positive",
        )?;
        check(self.eps > 0.0, "eps must be positive")?;
        check(self.optimizer.lr > 0.0, "optimizer.lr must be positive")?;
        check(
            self.optimizer.weight_decay >= 0.0,
            "optimizer.weight_decay must be >= 0",
        )?;
        check(
            self.optimizer.clip_norm >= 0.0,
            "optimizer.clip_norm must be >= 0",
        )?;
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }
}

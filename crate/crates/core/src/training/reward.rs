use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::{first_finisher, EpisodeTrace, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_agg: f64,
    pub r_first: f64,
    pub lambda_first: f64,
    /// `r_agg + lambda_first * r_first`.
    pub r_total: f64,
}

impl RewardBreakdown {
    pub fn new(r_agg: f64, r_first: f64, lambda_first: f64) -> Result<Self> {
        for (name, v) in [("r_agg", r_agg), ("r_first", r_first)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name}={v} outside [0, 1]")));
            }
        }
        if !(lambda_first >= 0.0 && lambda_first.is_finite()) {
            return Err(Error::validation(format!(
                "lambda_first={lambda_first} must be >= 0"
            )));
        }
        Ok(Self {
            r_agg,
            r_first,
            lambda_first,
            r_total: r_agg + lambda_first * r_first,
        })
    }
}

/// Scores the aggregated answer and the first finisher's answer.
///
/// A missing aggregate (aggregator failure) or missing first finisher scores 0.
pub fn episode_reward(
    trace: &EpisodeTrace,
    scorer: &dyn Scorer,
    lambda_first: f64,
) -> Result<RewardBreakdown> {
    let r_agg = trace.answer.as_deref().map_or(0.0, |a| scorer.score(a));
    let r_first = first_finisher(trace).map_or(0.0, |(_, a)| scorer.score(&a));
    RewardBreakdown::new(r_agg, r_first, lambda_first)
}

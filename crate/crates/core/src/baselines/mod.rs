//! The comparison methods: a single critic on a fixed-λ mixed reward, and a
//! dual-critic agent that follows the rate critic after a budget violation.
//!
//! Both run through the same trainer as NFWPO; only the actor-update rule
//! differs.

use crate::agents::TrainerConfig;
use crate::codec::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::RATE_TOLERANCE;
use crate::nfwpo::{train_with_rule, ActorRule, RunOptions, TrainEvent, TrainingRun};

/// λ values the CLI sweeps for the single-critic method.
pub const LAMBDA_SWEEP: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SingleCriticConfig {
    pub trainer: TrainerConfig,
    /// Weight of the rate reward in `r_D + λ r_R`.
    pub lambda: f64,
}

impl Default for SingleCriticConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::default(),
            lambda: 1.0,
        }
    }
}

impl SingleCriticConfig {
    pub fn rule(&self) -> ActorRule {
        ActorRule::SingleCritic {
            lambda: self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda: must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        self.trainer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCriticConfig {
    pub trainer: TrainerConfig,
    /// Relative budget deviation above which the rate critic drives the actor.
    pub tolerance: f64,
}

impl Default for DualCriticConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::default(),
            tolerance: RATE_TOLERANCE,
        }
    }
}

impl DualCriticConfig {
    pub fn rule(&self) -> ActorRule {
        ActorRule::DualCritic {
            tolerance: self.tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tolerance: must be finite and non-negative, got {}",
                self.tolerance
            )));
        }
        self.trainer.validate()
    }
}

pub fn train_single_critic(
    config: &SingleCriticConfig,
    env: EnvConfig,
    options: &RunOptions,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainingRun> {
    config.validate()?;
    train_with_rule(config.trainer.clone(), config.rule(), env, options, observer)
}

pub fn train_dual_critic(
    config: &DualCriticConfig,
    env: EnvConfig,
    options: &RunOptions,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainingRun> {
    config.validate()?;
    train_with_rule(config.trainer.clone(), config.rule(), env, options, observer)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, OptimizerKind};

/// Linearly decaying standard deviation of the Gaussian exploration noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub initial_scale: f64,
    pub final_scale: f64,
    /// Episodes over which the scale decays; constant afterwards.
    pub decay_episodes: usize,
}

impl NoiseSchedule {
    pub fn scale_at(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.final_scale;
        }
        let t = episode as f64 / self.decay_episodes as f64;
        self.initial_scale + (self.final_scale - self.initial_scale) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl OptimizerChoice {
    pub fn kind(self) -> OptimizerKind {
        match self {
            OptimizerChoice::Adam => OptimizerKind::ADAM,
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
        }
    }
}

/// How actions are mapped onto the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Clamp to the interval spanned by the feasible grid points.
    Hull,
    /// Snap to the nearest feasible grid point, lower QP on ties.
    NearestGridPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    /// Frank-Wolfe step size.
    pub nfwpo_lr: f64,
    /// Optional value reached linearly by the last episode; constant if unset.
    pub nfwpo_lr_final: Option<f64>,
    pub net_lr: f64,
    /// Feasible-set threshold on the rate reward-to-go.
    pub epsilon: f64,
    pub delta_qp_range: [f64; 2],
    pub qp_grid_step: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub episodes: usize,
    pub target_sync_period: usize,
    pub noise: NoiseSchedule,
    pub seed: u64,
    pub buffer_capacity: usize,
    /// Replay batches, each one critic and one actor update, per episode.
    pub updates_per_episode: usize,
    pub hidden_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub optimizer: OptimizerChoice,
    pub projection: ProjectionMode,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            nfwpo_lr: 0.1,
            nfwpo_lr_final: None,
            net_lr: 0.001,
            epsilon: -0.05,
            delta_qp_range: [-5.0, 5.0],
            qp_grid_step: 0.1,
            n_step: 3,
            batch_size: 64,
            episodes: 2000,
            target_sync_period: 5,
            noise: NoiseSchedule {
                initial_scale: 1.5,
                final_scale: 0.2,
                decay_episodes: 1500,
            },
            seed: 0,
            buffer_capacity: 50_000,
            updates_per_episode: 4,
            hidden_widths: vec![64, 64],
            hidden_activation: Activation::Relu,
            optimizer: OptimizerChoice::Adam,
            projection: ProjectionMode::Hull,
        }
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {msg}"))
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(bad("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        for (name, v) in [("nfwpo_lr", Some(self.nfwpo_lr)), ("nfwpo_lr_final", self.nfwpo_lr_final)] {
            if let Some(v) = v {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(bad(name, format!("must lie in (0, 1], got {v}")));
                }
            }
        }
        if !(self.net_lr > 0.0 && self.net_lr.is_finite()) {
            return Err(bad("net_lr", "must be positive"));
        }
        if !(self.epsilon < 0.0) {
            return Err(bad("epsilon", format!("must be negative, got {}", self.epsilon)));
        }
        let [lo, hi] = self.delta_qp_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(bad("delta_qp_range", "must be a non-empty finite interval"));
        }
        if !(self.qp_grid_step > 0.0) {
            return Err(bad("qp_grid_step", "must be positive"));
        }
        let steps = (hi - lo) / self.qp_grid_step;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(bad("qp_grid_step", "must divide delta_qp_range evenly"));
        }
        for (name, v) in [
            ("n_step", self.n_step),
            ("batch_size", self.batch_size),
            ("episodes", self.episodes),
            ("target_sync_period", self.target_sync_period),
            ("buffer_capacity", self.buffer_capacity),
            ("updates_per_episode", self.updates_per_episode),
        ] {
            if v == 0 {
                return Err(bad(name, "must be positive"));
            }
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(bad("hidden_widths", "widths must be positive"));
        }
        let n = &self.noise;
        if !(n.initial_scale >= 0.0 && n.final_scale >= 0.0) {
            return Err(bad("noise", "scales must be non-negative"));
        }
        Ok(())
    }

    /// Number of points on the delta-QP grid (101 for the defaults).
    pub fn grid_points(&self) -> usize {
        let [lo, hi] = self.delta_qp_range;
        ((hi - lo) / self.qp_grid_step).round() as usize + 1
    }

    /// Frank-Wolfe step size for a 0-based episode index.
    pub fn nfwpo_lr_at(&self, episode: usize) -> f64 {
        match self.nfwpo_lr_final {
            None => self.nfwpo_lr,
            Some(end) => {
                let t = episode as f64 / self.episodes.max(1) as f64;
                self.nfwpo_lr + (end - self.nfwpo_lr) * t.min(1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_hyperparameters() {
        let c = TrainerConfig::default();
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.nfwpo_lr, 0.1);
        assert_eq!(c.net_lr, 0.001);
        assert_eq!(c.epsilon, -0.05);
        assert_eq!(c.n_step, 3);
        assert_eq!(c.delta_qp_range, [-5.0, 5.0]);
        assert_eq!(c.grid_points(), 101);
        c.validate().unwrap();
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = TrainerConfig::default();
        c.epsilon = 0.05;
        assert!(c.validate().unwrap_err().to_string().contains("epsilon"));
        let mut c = TrainerConfig::default();
        c.qp_grid_step = 0.3;
        assert!(c.validate().unwrap_err().to_string().contains("qp_grid_step"));
        let mut c = TrainerConfig::default();
        c.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<TrainerConfig>("gamma = 0.9\ngamam = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("gamam"));
    }

    #[test]
    fn noise_decays_linearly() {
        let s = NoiseSchedule {
            initial_scale: 1.0,
            final_scale: 0.0,
            decay_episodes: 10,
        };
        assert_eq!(s.scale_at(0), 1.0);
        assert_eq!(s.scale_at(5), 0.5);
        assert_eq!(s.scale_at(10), 0.0);
        assert_eq!(s.scale_at(50), 0.0);
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::config::TrainerConfig;
use crate::agents::replay::Window;
use crate::codec::{StateVector, Transition, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Network, OptimState, OutputActivation, ParamVector};
use crate::nn::{MlpSpec, OptimizerKind};

/// Delta QP is divided by this before entering a critic.
pub const ACTION_SCALE: f64 = 5.0;
pub const CRITIC_INPUT_DIM: usize = STATE_DIM + 1;

pub fn critic_input(state: &StateVector, delta: f64) -> [f64; CRITIC_INPUT_DIM] {
    let mut x = [0.0; CRITIC_INPUT_DIM];
    x[..STATE_DIM].copy_from_slice(&state.network_input());
    x[STATE_DIM] = delta / ACTION_SCALE;
    x
}

/// Hex SHA-256 of the little-endian parameter bytes.
pub fn param_hash(p: &ParamVector) -> String {
    let mut h = Sha256::new();
    for v in &p.values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Q(s, delta) with a gradient along the action.
pub trait ActionCritic {
    fn value(&self, state: &StateVector, delta: f64) -> Result<f64>;
    /// dQ/d delta.
    fn action_gradient(&self, state: &StateVector, delta: f64) -> Result<f64>;

    fn values(&self, state: &StateVector, deltas: &[f64]) -> Result<Vec<f64>> {
        deltas.iter().map(|&d| self.value(state, d)).collect()
    }
}

impl<F, G> ActionCritic for (F, G)
where
    F: Fn(&StateVector, f64) -> f64,
    G: Fn(&StateVector, f64) -> f64,
{
    fn value(&self, state: &StateVector, delta: f64) -> Result<f64> {
        Ok((self.0)(state, delta))
    }

    fn action_gradient(&self, state: &StateVector, delta: f64) -> Result<f64> {
        Ok((self.1)(state, delta))
    }
}

/// Which reward a critic regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RewardKind {
    Distortion,
    Rate,
    Mixed { lambda: f64 },
}

impl RewardKind {
    pub fn of(self, t: &Transition) -> f64 {
        match self {
            RewardKind::Distortion => t.r_d,
            RewardKind::Rate => t.r_r,
            RewardKind::Mixed { lambda } => t.r_d + lambda * t.r_r,
        }
    }
}

fn check_finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// A value network with its target copy and optimizer state.
#[derive(Debug, Clone)]
pub struct Critic {
    pub net: Network,
    pub target: ParamVector,
    pub opt: OptimState,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        activation: Activation,
        optimizer: OptimizerKind,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![CRITIC_INPUT_DIM];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let spec = MlpSpec::new(widths, activation, OutputActivation::Identity)?;
        Ok(Self::from_network(Network::new(spec, rng)?, optimizer, learning_rate))
    }

    pub fn from_network(net: Network, optimizer: OptimizerKind, learning_rate: f64) -> Self {
        let target = net.params.clone();
        let opt = OptimState::new(optimizer, net.params.len(), learning_rate);
        Self { net, target, opt }
    }

    pub fn for_config<R: Rng + ?Sized>(config: &TrainerConfig, rng: &mut R) -> Result<Self> {
        Self::new(
            &config.hidden_widths,
            config.hidden_activation,
            config.optimizer.kind(),
            config.net_lr,
            rng,
        )
    }

    pub fn target_value(&self, state: &StateVector, delta: f64) -> Result<f64> {
        let v = self
            .net
            .mlp
            .forward_scalar(&self.target, &critic_input(state, delta))?;
        check_finite("target critic output", v)
    }

    /// Mean squared error over `(state, action)` samples and its parameter gradient.
    pub fn loss_and_gradient(
        &self,
        params: &ParamVector,
        samples: &[(StateVector, f64)],
        targets: &[f64],
    ) -> Result<(f64, ParamVector)> {
        if samples.len() != targets.len() || samples.is_empty() {
            return Err(Error::Dimension {
                layer: "critic targets".into(),
                expected: samples.len(),
                actual: targets.len(),
            });
        }
        let b = samples.len() as f64;
        let mut loss = 0.0;
        let mut grad = ParamVector::zeros(params.len());
        for ((s, a), &y) in samples.iter().zip(targets) {
            let trace = self.net.mlp.forward_trace(params, &critic_input(s, *a))?;
            let residual = trace.output()[0] - y;
            loss += residual * residual / b;
            self.net
                .mlp
                .backward_accumulate(params, &trace, &[2.0 * residual / b], &mut grad)?;
        }
        check_finite("critic loss", loss)?;
        Ok((loss, grad))
    }

    /// One optimizer step on the batch MSE; returns the loss before the step.
    pub fn fit(&mut self, samples: &[(StateVector, f64)], targets: &[f64]) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(&self.net.params, samples, targets)?;
        self.opt.step(&mut self.net.params, &grad)?;
        Ok(loss)
    }

    pub fn sync(&mut self) {
        self.target.values.copy_from_slice(&self.net.params.values);
    }
}

impl ActionCritic for Critic {
    fn value(&self, state: &StateVector, delta: f64) -> Result<f64> {
        let v = self
            .net
            .mlp
            .forward_scalar(&self.net.params, &critic_input(state, delta))?;
        check_finite("critic output", v)
    }

    fn action_gradient(&self, state: &StateVector, delta: f64) -> Result<f64> {
        let g = self
            .net
            .mlp
            .backward(&self.net.params, &critic_input(state, delta), &[1.0])?;
        check_finite("critic action gradient", g.input[STATE_DIM] / ACTION_SCALE)
    }

    fn values(&self, state: &StateVector, deltas: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = deltas.iter().map(|d| d / ACTION_SCALE).collect();
        let out = self.net.mlp.forward_sweep_last_input(
            &self.net.params,
            &critic_input(state, 0.0),
            &scaled,
        )?;
        for &v in &out {
            check_finite("critic output", v)?;
        }
        Ok(out)
    }
}

/// Deterministic policy: state to delta QP.
#[derive(Debug, Clone)]
pub struct Actor {
    pub net: Network,
    pub target: ParamVector,
    pub opt: OptimState,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(config: &TrainerConfig, rng: &mut R) -> Result<Self> {
        let [lo, hi] = config.delta_qp_range;
        let mut widths = vec![STATE_DIM];
        widths.extend_from_slice(&config.hidden_widths);
        widths.push(1);
        let spec = MlpSpec::new(
            widths,
            config.hidden_activation,
            OutputActivation::Bounded { lo, hi },
        )?;
        Ok(Self::from_network(
            Network::new(spec, rng)?,
            config.optimizer.kind(),
            config.net_lr,
        ))
    }

    pub fn from_network(net: Network, optimizer: OptimizerKind, learning_rate: f64) -> Self {
        let target = net.params.clone();
        let opt = OptimState::new(optimizer, net.params.len(), learning_rate);
        Self { net, target, opt }
    }

    pub fn act(&self, state: &StateVector) -> Result<f64> {
        let v = self
            .net
            .mlp
            .forward_scalar(&self.net.params, &state.network_input())?;
        check_finite("actor output", v)
    }

    pub fn target_act(&self, state: &StateVector) -> Result<f64> {
        let v = self
            .net
            .mlp
            .forward_scalar(&self.target, &state.network_input())?;
        check_finite("target actor output", v)
    }

    /// Parameter gradient of `Σ_b output_grads[b] · π(states[b])`.
    pub fn output_gradient(
        &self,
        params: &ParamVector,
        states: &[StateVector],
        output_grads: &[f64],
    ) -> Result<ParamVector> {
        let mut grad = ParamVector::zeros(params.len());
        for (s, &g) in states.iter().zip(output_grads) {
            if g == 0.0 {
                continue;
            }
            let trace = self.net.mlp.forward_trace(params, &s.network_input())?;
            self.net
                .mlp
                .backward_accumulate(params, &trace, &[g], &mut grad)?;
        }
        Ok(grad)
    }

    pub fn apply_gradient(&mut self, grad: &ParamVector) -> Result<()> {
        self.opt.step(&mut self.net.params, grad)
    }

    pub fn sync(&mut self) {
        self.target.values.copy_from_slice(&self.net.params.values);
    }
}

/// `Σ_k γ^k r_k` over the window plus `γ^len · bootstrap(s_len)` unless the
/// window ends the episode.
pub fn n_step_target<F>(window: &Window, reward: RewardKind, gamma: f64, bootstrap: F) -> Result<f64>
where
    F: FnOnce(&StateVector) -> Result<f64>,
{
    let mut y = 0.0;
    let mut discount = 1.0;
    for t in &window.steps {
        y += discount * reward.of(t);
        discount *= gamma;
    }
    if !window.terminal() {
        y += discount * bootstrap(window.bootstrap_state())?;
    }
    check_finite("critic target", y)
}

/// The distortion and rate critics.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub q_d: Critic,
    pub q_r: Critic,
    pub gamma: f64,
    pub n_step: usize,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(config: &TrainerConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            q_d: Critic::for_config(config, rng)?,
            q_r: Critic::for_config(config, rng)?,
            gamma: config.gamma,
            n_step: config.n_step,
        })
    }

    /// Bootstrapped targets with the target critics and the target actor.
    pub fn critic_targets(&self, batch: &[Window], actor: &Actor) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut y_d = Vec::with_capacity(batch.len());
        let mut y_r = Vec::with_capacity(batch.len());
        for w in batch {
            let next_action = if w.terminal() {
                0.0
            } else {
                actor.target_act(w.bootstrap_state())?
            };
            y_d.push(n_step_target(w, RewardKind::Distortion, self.gamma, |s| {
                self.q_d.target_value(s, next_action)
            })?);
            y_r.push(n_step_target(w, RewardKind::Rate, self.gamma, |s| {
                self.q_r.target_value(s, next_action)
            })?);
        }
        Ok((y_d, y_r))
    }

    /// One step per critic; returns the pre-step losses `(L_D, L_R)`.
    pub fn update_critics(&mut self, batch: &[Window], y_d: &[f64], y_r: &[f64]) -> Result<(f64, f64)> {
        let samples: Vec<(StateVector, f64)> = batch.iter().map(|w| (*w.state(), w.action())).collect();
        let l_d = self.q_d.fit(&samples, y_d)?;
        let l_r = self.q_r.fit(&samples, y_r)?;
        Ok((l_d, l_r))
    }

    /// Hard copy of every target on 1-based episode indices divisible by `period`.
    pub fn sync_targets(&mut self, actor: &mut Actor, period: usize, episode_index: usize) -> bool {
        if period == 0 || episode_index == 0 || episode_index % period != 0 {
            return false;
        }
        self.q_d.sync();
        self.q_r.sync();
        actor.sync();
        true
    }
}

//! The episode loop shared by every actor rule: noisy rollout, replay, n-step
//! critic regression, actor update and periodic hard target sync.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    exploration_noise, n_step_target, perturb, ActionCritic, Critic, ReplayBuffer, RewardKind,
    Window,
};
use crate::codec::{run_episode, EnvConfig, EpisodeOutcome, EpisodeSpec, GopStructure, StateVector};
use crate::error::{Error, Result};
use crate::nfwpo::agent::{ActorRule, Agent};
use crate::nfwpo::ops::{
    actor_update, feasible_set, fw_direction, project, reference_action, DeltaGrid,
};
use crate::nn::ParamVector;

/// One Frank-Wolfe actor step, in absolute QP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwUpdate {
    pub pre_projection: f64,
    pub projected: f64,
    pub direction: f64,
    pub reference: f64,
    pub actor_loss: f64,
    pub hull_lo: f64,
    pub hull_hi: f64,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainEvent<'a> {
    /// An executed rollout action.
    Action { episode: usize, qp: f64, base_qp: f64 },
    Batch { episode: usize, windows: &'a [Window] },
    Fw { episode: usize, update: &'a FwUpdate },
    TargetsSynced { episode: usize },
}

/// Runtime checks of the feasibility invariants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounters {
    pub actions_checked: u64,
    pub actions_out_of_range: u64,
    pub references_checked: u64,
    pub references_outside_hull: u64,
    pub fallback_sets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// 1-based.
    pub episode: usize,
    pub noise_scale: f64,
    /// Exploration rollout.
    pub rate_deviation: f64,
    pub quality_gain: f64,
    /// Noise-free rollout of the same GOP before this episode's update.
    pub greedy_rate_deviation: f64,
    pub greedy_quality_gain: f64,
    /// NaN when no update ran (buffer still filling).
    #[serde(deserialize_with = "crate::nan::deserialize")]
    pub critic_loss_d: f64,
    #[serde(deserialize_with = "crate::nan::deserialize")]
    pub critic_loss_r: f64,
    #[serde(deserialize_with = "crate::nan::deserialize")]
    pub actor_loss: f64,
    #[serde(deserialize_with = "crate::nan::deserialize")]
    pub fallback_fraction: f64,
    /// Dual-critic rule only: the actor followed Q_R this episode.
    pub rate_critic_selected: bool,
}

pub struct Trainer {
    pub agent: Agent,
    pub env: EnvConfig,
    structure: GopStructure,
    buffer: ReplayBuffer,
    grid: DeltaGrid,
    env_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    episodes_done: usize,
    last_greedy_violation: bool,
    pub invariants: InvariantCounters,
}

struct UpdateStats {
    loss_d: f64,
    loss_r: f64,
    actor_loss: f64,
    fallback_fraction: f64,
}

impl Trainer {
    pub fn new(agent: Agent, env: EnvConfig) -> Result<Self> {
        env.validate()?;
        let structure = env.structure.build()?;
        let c = &agent.config;
        let stream = |name: &str| ChaCha8Rng::seed_from_u64(crate::seed::derive(c.seed, name));
        Ok(Self {
            buffer: ReplayBuffer::new(c.buffer_capacity, c.n_step),
            grid: DeltaGrid::from_config(c),
            env_rng: stream("env"),
            noise_rng: stream("noise"),
            replay_rng: stream("replay"),
            agent,
            env,
            structure,
            episodes_done: 0,
            last_greedy_violation: false,
            invariants: InvariantCounters::default(),
        })
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn structure(&self) -> &GopStructure {
        &self.structure
    }

    /// Runs all configured episodes.
    pub fn train(&mut self, observer: &mut dyn FnMut(&TrainEvent)) -> Result<Vec<EpisodeMetrics>> {
        let total = self.agent.config.episodes;
        let mut out = Vec::with_capacity(total.saturating_sub(self.episodes_done));
        while self.episodes_done < total {
            out.push(self.step(observer)?);
        }
        Ok(out)
    }

    /// One episode of the training loop.
    pub fn step(&mut self, observer: &mut dyn FnMut(&TrainEvent)) -> Result<EpisodeMetrics> {
        let episode = self.episodes_done + 1;
        self.step_inner(episode, observer).map_err(|e| match e {
            Error::NonFinite(detail) => Error::Diverged { episode, detail },
            other => other,
        })
    }

    fn step_inner(
        &mut self,
        episode: usize,
        observer: &mut dyn FnMut(&TrainEvent),
    ) -> Result<EpisodeMetrics> {
        let spec = self.env.sample_spec(&mut self.env_rng);
        let noise_scale = self.agent.config.noise.scale_at(episode - 1);
        let rollout = self.rollout(&spec, episode, observer)?;
        let greedy = self.greedy_rollout(&spec)?;
        if let ActorRule::DualCritic { tolerance } = self.agent.rule {
            self.last_greedy_violation = greedy.summary.rate_deviation > tolerance;
        }
        self.buffer.push_episode(rollout.transitions.clone())?;

        let mut stats = UpdateStats {
            loss_d: f64::NAN,
            loss_r: f64::NAN,
            actor_loss: f64::NAN,
            fallback_fraction: f64::NAN,
        };
        let rate_critic_selected =
            matches!(self.agent.rule, ActorRule::DualCritic { .. }) && self.last_greedy_violation;
        if self.buffer.len() >= self.agent.config.batch_size {
            for _ in 0..self.agent.config.updates_per_episode {
                let batch = self
                    .buffer
                    .sample_batch(self.agent.config.batch_size, &mut self.replay_rng)?;
                observer(&TrainEvent::Batch {
                    episode,
                    windows: &batch,
                });
                stats = self.update(&batch, episode, observer)?;
            }
        }
        let c = self.agent.config.target_sync_period;
        let agent = &mut self.agent;
        let synced = agent.critics.sync_targets(&mut agent.actor, c, episode);
        if synced {
            if let Some(m) = agent.mixed.as_mut() {
                m.sync();
            }
            observer(&TrainEvent::TargetsSynced { episode });
        }
        self.episodes_done = episode;
        Ok(EpisodeMetrics {
            episode,
            noise_scale,
            rate_deviation: rollout.summary.rate_deviation,
            quality_gain: rollout.summary.quality_gain,
            greedy_rate_deviation: greedy.summary.rate_deviation,
            greedy_quality_gain: greedy.summary.quality_gain,
            critic_loss_d: stats.loss_d,
            critic_loss_r: stats.loss_r,
            actor_loss: stats.actor_loss,
            fallback_fraction: stats.fallback_fraction,
            rate_critic_selected,
        })
    }

    fn rollout(
        &mut self,
        spec: &EpisodeSpec,
        episode: usize,
        observer: &mut dyn FnMut(&TrainEvent),
    ) -> Result<EpisodeOutcome> {
        let (model, ep0) = spec.instantiate(&self.structure);
        let config = &self.agent.config;
        let actor = &self.agent.actor;
        let noise_rng = &mut self.noise_rng;
        let invariants = &mut self.invariants;
        let [lo, hi] = config.delta_qp_range;
        run_episode(
            &model,
            |s: &StateVector| {
                let n = exploration_noise(&config.noise, episode - 1, noise_rng);
                let delta = perturb(actor.act(s)?, n, config.delta_qp_range);
                invariants.actions_checked += 1;
                if !(lo..=hi).contains(&delta) {
                    invariants.actions_out_of_range += 1;
                }
                observer(&TrainEvent::Action {
                    episode,
                    qp: s.base_qp + delta,
                    base_qp: s.base_qp,
                });
                Ok(delta)
            },
            &ep0,
        )
    }

    fn greedy_rollout(&self, spec: &EpisodeSpec) -> Result<EpisodeOutcome> {
        let (model, ep0) = spec.instantiate(&self.structure);
        run_episode(&model, |s| self.agent.greedy_action(s), &ep0)
    }

    fn update(
        &mut self,
        batch: &[Window],
        episode: usize,
        observer: &mut dyn FnMut(&TrainEvent),
    ) -> Result<UpdateStats> {
        let (loss_d, loss_r) = match self.agent.rule {
            ActorRule::SingleCritic { lambda } => {
                let agent = &mut self.agent;
                let mixed = agent.mixed.as_mut().expect("single-critic agent has a mixed critic");
                let reward = RewardKind::Mixed { lambda };
                let mut y = Vec::with_capacity(batch.len());
                for w in batch {
                    y.push(n_step_target(w, reward, agent.config.gamma, |s| {
                        mixed.target_value(s, agent.actor.target_act(s)?)
                    })?);
                }
                let samples: Vec<(StateVector, f64)> =
                    batch.iter().map(|w| (*w.state(), w.action())).collect();
                (mixed.fit(&samples, &y)?, f64::NAN)
            }
            _ => {
                let (y_d, y_r) = self.agent.critics.critic_targets(batch, &self.agent.actor)?;
                self.agent.critics.update_critics(batch, &y_d, &y_r)?
            }
        };
        let alpha = self.agent.config.nfwpo_lr_at(episode - 1);
        let (actor_loss, fallback_fraction) = match self.agent.rule {
            ActorRule::Nfwpo => self.frank_wolfe_update(batch, alpha, episode, observer)?,
            ActorRule::UnconstrainedArgmax => self.argmax_update(batch, alpha, episode, observer)?,
            ActorRule::SingleCritic { .. } => {
                let critic = self.agent.mixed.clone().expect("mixed critic");
                (self.policy_gradient_update(batch, &critic)?, f64::NAN)
            }
            ActorRule::DualCritic { .. } => {
                let critic = if self.last_greedy_violation {
                    self.agent.critics.q_r.clone()
                } else {
                    self.agent.critics.q_d.clone()
                };
                (self.policy_gradient_update(batch, &critic)?, f64::NAN)
            }
        };
        Ok(UpdateStats {
            loss_d,
            loss_r,
            actor_loss,
            fallback_fraction,
        })
    }

    /// Per sampled state: feasible set, projection, FW direction, reference
    /// action and one regression step.
    fn frank_wolfe_update(
        &mut self,
        batch: &[Window],
        alpha: f64,
        episode: usize,
        observer: &mut dyn FnMut(&TrainEvent),
    ) -> Result<(f64, f64)> {
        let mut total_loss = 0.0;
        let mut fallbacks = 0usize;
        for w in batch {
            let s = w.state();
            let base = s.base_qp;
            let agent = &mut self.agent;
            let set = feasible_set(&agent.critics.q_r, s, agent.config.epsilon, base, &self.grid)?;
            let raw = base + agent.actor.act(s)?;
            let p = project(raw, &set, agent.config.projection);
            let c = fw_direction(&agent.critics.q_d, s, &set, p)?;
            let reference = reference_action(p, c, alpha);
            let loss = actor_update(&mut agent.actor, s, reference - base)?;
            self.invariants.references_checked += 1;
            if !set.hull_contains(reference) {
                self.invariants.references_outside_hull += 1;
            }
            if set.fallback_used {
                self.invariants.fallback_sets += 1;
                fallbacks += 1;
            }
            let update = FwUpdate {
                pre_projection: raw,
                projected: p,
                direction: c,
                reference,
                actor_loss: loss,
                hull_lo: set.lo,
                hull_hi: set.hi,
                fallback_used: set.fallback_used,
            };
            observer(&TrainEvent::Fw {
                episode,
                update: &update,
            });
            total_loss += loss;
        }
        let n = batch.len() as f64;
        Ok((total_loss / n, fallbacks as f64 / n))
    }

    /// Ablation: same regression, but toward the distortion-critic argmax over
    /// the whole delta range.
    fn argmax_update(
        &mut self,
        batch: &[Window],
        alpha: f64,
        episode: usize,
        observer: &mut dyn FnMut(&TrainEvent),
    ) -> Result<(f64, f64)> {
        let deltas: Vec<f64> = (0..self.grid.len()).map(|k| self.grid.delta(k)).collect();
        let (lo, hi) = (self.grid.lo, self.grid.hi);
        let mut total_loss = 0.0;
        for w in batch {
            let s = w.state();
            let base = s.base_qp;
            let agent = &mut self.agent;
            let values = agent.critics.q_d.values(s, &deltas)?;
            let mut best = 0;
            for (k, &v) in values.iter().enumerate() {
                if v > values[best] {
                    best = k;
                }
            }
            let raw = base + agent.actor.act(s)?;
            let p = raw.clamp(base + lo, base + hi);
            let c = base + deltas[best];
            let reference = reference_action(p, c, alpha);
            let loss = actor_update(&mut agent.actor, s, reference - base)?;
            self.invariants.references_checked += 1;
            if !(base + lo..=base + hi).contains(&reference) {
                self.invariants.references_outside_hull += 1;
            }
            let update = FwUpdate {
                pre_projection: raw,
                projected: p,
                direction: c,
                reference,
                actor_loss: loss,
                hull_lo: base + lo,
                hull_hi: base + hi,
                fallback_used: false,
            };
            observer(&TrainEvent::Fw {
                episode,
                update: &update,
            });
            total_loss += loss;
        }
        Ok((total_loss / batch.len() as f64, 0.0))
    }

    /// Deterministic policy gradient: ascend `mean_b Q(s_b, π(s_b))`.
    /// Returns `-mean Q` before the step.
    fn policy_gradient_update(&mut self, batch: &[Window], critic: &Critic) -> Result<f64> {
        let actor = &mut self.agent.actor;
        let n = batch.len() as f64;
        let mut states = Vec::with_capacity(batch.len());
        let mut output_grads = Vec::with_capacity(batch.len());
        let mut mean_q = 0.0;
        for w in batch {
            let s = *w.state();
            let a = actor.act(&s)?;
            mean_q += critic.value(&s, a)? / n;
            output_grads.push(-critic.action_gradient(&s, a)? / n);
            states.push(s);
        }
        let grad: ParamVector = actor.output_gradient(&actor.net.params, &states, &output_grads)?;
        actor.apply_gradient(&grad)?;
        Ok(-mean_q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::TrainerConfig;
    use crate::agents::param_hash;

    fn config(episodes: usize) -> TrainerConfig {
        TrainerConfig {
            episodes,
            hidden_widths: vec![16, 16],
            batch_size: 16,
            seed: 5,
            ..TrainerConfig::default()
        }
    }

    fn trainer(rule: ActorRule, episodes: usize) -> Trainer {
        Trainer::new(Agent::new(config(episodes), rule).unwrap(), EnvConfig::default()).unwrap()
    }

    #[test]
    fn smoke_run_keeps_references_in_the_hull() {
        let mut t = trainer(ActorRule::Nfwpo, 10);
        let mut fw = 0;
        let metrics = t
            .train(&mut |e| {
                if let TrainEvent::Fw { update, .. } = e {
                    assert!(update.hull_lo <= update.reference && update.reference <= update.hull_hi);
                    assert!(update.hull_lo <= update.projected && update.projected <= update.hull_hi);
                    fw += 1;
                }
            })
            .unwrap();
        assert_eq!(metrics.len(), 10);
        assert!(fw > 0);
        assert_eq!(t.invariants.references_outside_hull, 0);
        assert_eq!(t.invariants.actions_out_of_range, 0);
        assert_eq!(t.invariants.actions_checked, 160);
    }

    #[test]
    fn runs_are_deterministic() {
        for rule in [
            ActorRule::Nfwpo,
            ActorRule::SingleCritic { lambda: 1.0 },
            ActorRule::DualCritic { tolerance: 0.05 },
            ActorRule::UnconstrainedArgmax,
        ] {
            let a = trainer(rule, 6).train(&mut |_| {}).unwrap();
            let b = trainer(rule, 6).train(&mut |_| {}).unwrap();
            assert_eq!(format!("{a:?}"), format!("{b:?}"), "{rule}");
        }
    }

    #[test]
    fn windows_never_cross_episodes_during_training() {
        let mut t = trainer(ActorRule::Nfwpo, 12);
        t.train(&mut |e| {
            if let TrainEvent::Batch { windows, .. } = e {
                for w in windows.iter() {
                    assert!(!w.steps.is_empty() && w.steps.len() <= 3);
                    for pair in w.steps.windows(2) {
                        assert!(!pair[0].terminal);
                        assert_eq!(pair[0].next_state, pair[1].state);
                    }
                }
            }
        })
        .unwrap();
    }

    #[test]
    fn targets_only_change_at_sync_points() {
        let mut t = trainer(ActorRule::Nfwpo, 13);
        let mut hashes = Vec::new();
        for _ in 0..13 {
            let m = t.step(&mut |_| {}).unwrap();
            hashes.push((m.episode, param_hash(&t.agent.critics.q_r.target)));
        }
        for pair in hashes.windows(2) {
            let (e, ref h) = pair[1];
            if e % 5 != 0 {
                assert_eq!(h, &pair[0].1, "target changed at episode {e}");
            }
        }
        assert_ne!(hashes[4].1, hashes[0].1);
    }
}

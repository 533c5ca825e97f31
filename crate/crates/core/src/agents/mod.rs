//! Actor-critic machinery shared by every trainer: replay, exploration noise,
//! critics with hard-copied targets and n-step temporal-difference targets.

pub mod config;
pub mod critics;
pub mod noise;
pub mod replay;

pub use config::{NoiseSchedule, OptimizerChoice, ProjectionMode, TrainerConfig};
pub use critics::{
    critic_input, n_step_target, param_hash, ActionCritic, Actor, Critic, CriticPair, RewardKind,
    ACTION_SCALE, CRITIC_INPUT_DIM,
};
pub use noise::{exploration_noise, perturb};
pub use replay::{ReplayBuffer, Window};

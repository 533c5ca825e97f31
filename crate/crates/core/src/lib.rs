//! Frank-Wolfe policy optimization for action-constrained frame-level bit
//! allocation over a synthetic hierarchical-B GOP encoder.

pub mod agents;
pub mod baselines;
pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
mod nan;
pub mod nfwpo;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};

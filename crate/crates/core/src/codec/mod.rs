//! Deterministic stand-in for an encoder plus quality metric: per-frame
//! rate/quality curves over a hierarchical-B GOP, episodic encoding, state
//! features and rewards.

pub mod env;
pub mod episode;
pub mod gop;
pub mod model;
pub mod state;

pub use env::{EnvConfig, EpisodeSpec, StructureKind};
pub use episode::{
    anchor_bits, distortion_reward, encode_frame, rate_reward, run_episode, write_trace_csv,
    BaseQps, EncodeOutcome, EpisodeOutcome, EpisodeState, EpisodeSummary, FrameRecord,
    Transition, DELTA_QP_LIMIT,
};
pub use gop::{FrameInfo, FrameType, GopStructure};
pub use model::{build_gop_model, build_gop_model_for, FrameParams, GopModel, Profile};
pub use state::{extract_state, terminal_state, StateVector, STATE_DIM};

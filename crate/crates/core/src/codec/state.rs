//! The nine-feature observation handed to the actor and the critics.
//!
//! | # | field                     | scale                                              |
//! |---|---------------------------|----------------------------------------------------|
//! | 1 | `intra`                   | `ln(s_i / 10^4)`, own-frame complexity             |
//! | 2 | `inter`                   | `d_i`, own-frame dependency on references          |
//! | 3 | `avg_intra_remaining`     | `ln(mean s_j / 10^4)` over frames not yet coded    |
//! | 4 | `avg_inter_remaining`     | mean `d_j` over frames not yet coded               |
//! | 5 | `remaining_bits_fraction` | `(R_GOP - R_actual) / R_GOP`                       |
//! | 6 | `remaining_frames`        | count of frames not yet coded                      |
//! | 7 | `temporal_id`             | 0, 1 or 2                                          |
//! | 8 | `rate_constraint`         | `ln(R_GOP / 10^5)`                                 |
//! | 9 | `base_qp`                 | base QP of the current frame                       |
//!
//! Features 6, 7 and 9 are kept in natural units; [`StateVector::network_input`]
//! rescales them to order one before they reach a network.

use serde::{Deserialize, Serialize};

use crate::codec::episode::EpisodeState;
use crate::codec::model::GopModel;
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 9;
const COMPLEXITY_UNIT: f64 = 1e4;
const BUDGET_UNIT: f64 = 1e5;
const FRAME_COUNT_SCALE: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub intra: f64,
    pub inter: f64,
    pub avg_intra_remaining: f64,
    pub avg_inter_remaining: f64,
    pub remaining_bits_fraction: f64,
    pub remaining_frames: f64,
    pub temporal_id: f64,
    pub rate_constraint: f64,
    pub base_qp: f64,
}

impl StateVector {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.intra,
            self.inter,
            self.avg_intra_remaining,
            self.avg_inter_remaining,
            self.remaining_bits_fraction,
            self.remaining_frames,
            self.temporal_id,
            self.rate_constraint,
            self.base_qp,
        ]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self {
            intra: a[0],
            inter: a[1],
            avg_intra_remaining: a[2],
            avg_inter_remaining: a[3],
            remaining_bits_fraction: a[4],
            remaining_frames: a[5],
            temporal_id: a[6],
            rate_constraint: a[7],
            base_qp: a[8],
        }
    }

    /// Order-one rescaling fed to the networks.
    pub fn network_input(&self) -> [f64; STATE_DIM] {
        let mut a = self.to_array();
        a[5] /= FRAME_COUNT_SCALE;
        a[6] /= 2.0;
        a[8] = (a[8] - 30.0) / 10.0;
        a
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

fn intra_stat(model: &GopModel, ci: usize) -> f64 {
    (model.frames[ci].complexity / COMPLEXITY_UNIT).ln()
}

pub fn extract_state(model: &GopModel, ep: &EpisodeState) -> Result<StateVector> {
    let n = model.episode_len();
    if ep.frame_index >= n {
        return Err(Error::EpisodeComplete);
    }
    let lead = model.structure.leading;
    let ci = lead + ep.frame_index;
    let frame = &model.structure.frames[ci];
    let remaining = lead + ep.frame_index..lead + n;
    let count = remaining.len() as f64;
    let mean_complexity = remaining
        .clone()
        .map(|j| model.frames[j].complexity)
        .sum::<f64>()
        / count;
    let mean_dependency = remaining.map(|j| model.frames[j].dependency).sum::<f64>() / count;
    Ok(StateVector {
        intra: intra_stat(model, ci),
        inter: model.frames[ci].dependency,
        avg_intra_remaining: (mean_complexity / COMPLEXITY_UNIT).ln(),
        avg_inter_remaining: mean_dependency,
        remaining_bits_fraction: ep.remaining_bits_fraction(),
        remaining_frames: count,
        temporal_id: frame.temporal_id as f64,
        rate_constraint: (ep.r_gop / BUDGET_UNIT).ln(),
        base_qp: ep.base_qps.for_type(frame.frame_type),
    })
}

/// Observation after the last frame. Never bootstrapped from; frame-local
/// features are zero.
pub fn terminal_state(ep: &EpisodeState) -> StateVector {
    StateVector {
        intra: 0.0,
        inter: 0.0,
        avg_intra_remaining: 0.0,
        avg_inter_remaining: 0.0,
        remaining_bits_fraction: ep.remaining_bits_fraction(),
        remaining_frames: 0.0,
        temporal_id: 0.0,
        rate_constraint: (ep.r_gop / BUDGET_UNIT).ln(),
        base_qp: ep.qp_level,
    }
}

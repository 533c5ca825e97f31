//! Per-frame rate and quality response curves.
//!
//! Rate halves every 6 QP steps:
//!
//! ```text
//! R_i(qp) = s_i * 2^((anchor_qp - qp) / 6)
//! ```
//!
//! Quality is linear in the frame's own QP and in how far its references were
//! coded from their base QP:
//!
//! ```text
//! V_i(qp) = clamp(v_i - k_i (qp - anchor_qp) - d_i * mean_r(qp_r - base_r), 0, 100)
//! ```

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::gop::{FrameType, GopStructure};
use crate::error::{Error, Result};

pub const DEFAULT_ANCHOR_QP: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Easy,
    Textured,
    MotionHeavy,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Easy, Profile::Textured, Profile::MotionHeavy];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Easy => "easy",
            Profile::Textured => "textured",
            Profile::MotionHeavy => "motion-heavy",
        }
    }

    fn traits(self) -> ProfileTraits {
        match self {
            Profile::Easy => ProfileTraits {
                complexity: [48_000.0, 16_000.0, 6_000.0],
                ceiling: 82.0,
                slope: 0.9,
                dependency: [0.30, 0.40],
            },
            Profile::Textured => ProfileTraits {
                complexity: [110_000.0, 36_000.0, 14_000.0],
                ceiling: 70.0,
                slope: 1.4,
                dependency: [0.35, 0.45],
            },
            Profile::MotionHeavy => ProfileTraits {
                complexity: [80_000.0, 52_000.0, 26_000.0],
                ceiling: 66.0,
                slope: 1.2,
                dependency: [0.60, 0.70],
            },
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Profile::Easy),
            "textured" => Ok(Profile::Textured),
            "motion-heavy" => Ok(Profile::MotionHeavy),
            other => Err(Error::InvalidConfig(format!(
                "unknown profile `{other}` (expected easy, textured or motion-heavy)"
            ))),
        }
    }
}

struct ProfileTraits {
    /// Bits at the anchor QP for I, B and b frames.
    complexity: [f64; 3],
    ceiling: f64,
    slope: f64,
    /// Dependency weight for B and b frames.
    dependency: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    /// `s_i`: bits at the anchor QP.
    pub complexity: f64,
    /// `v_i`: quality at the anchor QP with references at their base QP.
    pub quality_ceiling: f64,
    /// `k_i`: quality points lost per QP step.
    pub quality_slope: f64,
    /// `d_i`: quality points lost per QP step of the references above base.
    pub dependency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GopModel {
    pub profile: Profile,
    pub seed: u64,
    pub anchor_qp: f64,
    pub structure: GopStructure,
    /// Indexed by coding order, parallel to `structure.frames`.
    pub frames: Vec<FrameParams>,
}

impl GopModel {
    pub fn rate(&self, coding_index: usize, qp: f64) -> f64 {
        self.frames[coding_index].complexity * ((self.anchor_qp - qp) / 6.0).exp2()
    }

    /// Quality of a frame given its own QP and the mean offset of its
    /// references from their base QPs.
    pub fn quality(&self, coding_index: usize, qp: f64, mean_reference_offset: f64) -> f64 {
        let p = &self.frames[coding_index];
        (p.quality_ceiling
            - p.quality_slope * (qp - self.anchor_qp)
            - p.dependency * mean_reference_offset)
            .clamp(0.0, 100.0)
    }

    pub fn episode_len(&self) -> usize {
        self.structure.episode_len()
    }
}

/// GOP-16 hierarchical-B model.
pub fn build_gop_model(seed: u64, profile: Profile) -> GopModel {
    let structure = GopStructure::hierarchical_b(16).expect("16 is a valid GOP size");
    build_gop_model_for(structure, seed, profile)
}

pub fn build_gop_model_for(structure: GopStructure, seed: u64, profile: Profile) -> GopModel {
    let traits = profile.traits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    let frames = structure
        .frames
        .iter()
        .map(|f| {
            let (base_bits, dependency) = match f.frame_type {
                FrameType::I => (traits.complexity[0], 0.0),
                FrameType::B => (traits.complexity[1], traits.dependency[0]),
                FrameType::LowB => (traits.complexity[2], traits.dependency[1]),
            };
            let complexity = base_bits * rng.gen_range(0.85..=1.15);
            let quality_ceiling = traits.ceiling + rng.gen_range(-3.0..=3.0);
            let quality_slope = traits.slope * rng.gen_range(0.85..=1.15);
            let jitter: f64 = rng.gen_range(-0.1..=0.1);
            let dependency = if f.references.is_empty() {
                0.0
            } else {
                (dependency + jitter).clamp(0.0, 1.0)
            };
            FrameParams {
                complexity,
                quality_ceiling,
                quality_slope,
                dependency,
            }
        })
        .collect();
    GopModel {
        profile,
        seed,
        anchor_qp: DEFAULT_ANCHOR_QP,
        structure,
        frames,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp_grid(anchor: f64) -> impl Iterator<Item = f64> {
        (-100..=100).map(move |k| anchor + k as f64 / 10.0)
    }

    #[test]
    fn deterministic_per_seed_and_profile() {
        assert_eq!(
            build_gop_model(7, Profile::Textured),
            build_gop_model(7, Profile::Textured)
        );
        assert_ne!(
            build_gop_model(7, Profile::Textured),
            build_gop_model(8, Profile::Textured)
        );
    }

    #[test]
    fn motion_heavy_costs_more_than_easy_everywhere() {
        for seed in 0..20 {
            let easy = build_gop_model(seed, Profile::Easy);
            let motion = build_gop_model(seed, Profile::MotionHeavy);
            for qp in qp_grid(easy.anchor_qp) {
                let total = |m: &GopModel| (0..m.frames.len()).map(|i| m.rate(i, qp)).sum::<f64>();
                assert!(total(&motion) > total(&easy), "seed {seed} qp {qp}");
            }
        }
    }

    #[test]
    fn rate_strictly_decreasing_and_quality_non_increasing() {
        for profile in Profile::ALL {
            for seed in 0..10 {
                let m = build_gop_model(seed, profile);
                for i in 0..m.frames.len() {
                    let qps: Vec<f64> = qp_grid(m.anchor_qp).collect();
                    for w in qps.windows(2) {
                        assert!(m.rate(i, w[0]) > m.rate(i, w[1]));
                        assert!(m.quality(i, w[0], 0.0) >= m.quality(i, w[1], 0.0));
                        assert!(m.rate(i, w[1]).is_finite());
                    }
                }
            }
        }
    }

    #[test]
    fn frame_type_complexity_ordering() {
        for profile in Profile::ALL {
            for seed in 0..20 {
                let m = build_gop_model(seed, profile);
                let of = |t: FrameType| -> Vec<f64> {
                    m.structure
                        .frames
                        .iter()
                        .zip(&m.frames)
                        .filter(|(f, _)| f.frame_type == t)
                        .map(|(_, p)| p.complexity)
                        .collect()
                };
                let min_i = of(FrameType::I).into_iter().fold(f64::INFINITY, f64::min);
                let max_b = of(FrameType::B).into_iter().fold(0.0, f64::max);
                let min_b = of(FrameType::B).into_iter().fold(f64::INFINITY, f64::min);
                let max_lb = of(FrameType::LowB).into_iter().fold(0.0, f64::max);
                assert!(min_i > max_b && min_b > max_lb, "{profile} seed {seed}");
            }
        }
    }

    #[test]
    fn halving_per_six_qp() {
        let m = build_gop_model(1, Profile::Easy);
        let r = m.rate(3, 30.0) / m.rate(3, 36.0);
        assert!((r - 2.0).abs() < 1e-12);
        assert_eq!(m.rate(3, m.anchor_qp), m.frames[3].complexity);
    }

    #[test]
    fn profile_names_round_trip() {
        for p in Profile::ALL {
            assert_eq!(p.as_str().parse::<Profile>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.as_str()));
        }
        assert!("hard".parse::<Profile>().is_err());
    }
}

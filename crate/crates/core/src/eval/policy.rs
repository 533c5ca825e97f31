//! Noise-free policy evaluation over deterministic GOP sets.

use serde::{Deserialize, Serialize};

use crate::codec::{run_episode, EnvConfig, EpisodeOutcome, EpisodeSpec, GopStructure, StateVector};
use crate::error::{Error, Result};
use crate::eval::bdrate::RdPoint;
use crate::eval::stats::{rate_deviation_stats, DeviationStats, RATE_TOLERANCE};
use crate::nfwpo::Agent;

/// Fixed levels at which R-D curves are sampled.
pub const RD_QP_LEVELS: [f64; 4] = [22.0, 27.0, 32.0, 37.0];

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Every frame at its base QP.
    Anchor,
    Agent(&'a Agent),
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Anchor => "anchor",
            Policy::Agent(a) => a.rule.method(),
        }
    }

    pub fn action(&self, state: &StateVector) -> Result<f64> {
        match self {
            Policy::Anchor => Ok(0.0),
            Policy::Agent(a) => a.greedy_action(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub episodes: usize,
    pub deviation: DeviationStats,
    /// Mean per-GOP quality gain over the anchor encode.
    pub mean_quality_gain: f64,
    /// Mean per-frame quality.
    pub mean_quality: f64,
    /// Mean bits per GOP.
    pub mean_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub summary: EvalSummary,
    pub episodes: Vec<(EpisodeSpec, EpisodeOutcome)>,
}

/// Runs the greedy policy once on every spec.
pub fn evaluate_policy(
    policy: Policy<'_>,
    structure: &GopStructure,
    specs: &[EpisodeSpec],
) -> Result<Evaluation> {
    if specs.is_empty() {
        return Err(Error::NoData("evaluation needs at least one GOP"));
    }
    let mut episodes = Vec::with_capacity(specs.len());
    for spec in specs {
        let (model, ep0) = spec.instantiate(structure);
        let out = run_episode(&model, |s| policy.action(s), &ep0)?;
        episodes.push((spec.clone(), out));
    }
    let n = episodes.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeOutcome) -> f64| episodes.iter().map(|(_, o)| f(o)).sum::<f64>() / n;
    let summary = EvalSummary {
        policy: policy.name().to_string(),
        episodes: episodes.len(),
        deviation: rate_deviation_stats(
            episodes.iter().map(|(_, o)| o.summary.rate_deviation),
            RATE_TOLERANCE,
        )?,
        mean_quality_gain: mean(&|o| o.summary.quality_gain),
        mean_quality: mean(&|o| o.summary.mean_quality),
        mean_bits: mean(&|o| o.summary.total_bits),
    };
    Ok(Evaluation { summary, episodes })
}

/// One point per QP level: mean bits per GOP and mean frame quality over the
/// evaluation GOPs of `env` at budget factor 1.
pub fn build_rd_curve(
    policy: Policy<'_>,
    env: &EnvConfig,
    qp_levels: &[f64],
    seed: u64,
    gops_per_cell: usize,
) -> Result<Vec<RdPoint>> {
    let structure = env.structure.build()?;
    qp_levels
        .iter()
        .map(|&level| {
            let cell = EnvConfig {
                qp_levels: vec![level],
                budget_factors: vec![1.0],
                ..env.clone()
            };
            cell.validate()?;
            let eval = evaluate_policy(policy, &structure, &cell.evaluation_specs(seed, gops_per_cell))?;
            Ok(RdPoint::new(eval.summary.mean_bits, eval.summary.mean_quality))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Profile;

    fn env() -> EnvConfig {
        EnvConfig {
            profiles: vec![Profile::Easy, Profile::Textured],
            ..EnvConfig::default()
        }
    }

    #[test]
    fn anchor_is_neutral() {
        let env = env();
        let s = env.structure.build().unwrap();
        let specs = EnvConfig {
            budget_factors: vec![1.0],
            ..env
        }
        .evaluation_specs(4, 3);
        let e = evaluate_policy(Policy::Anchor, &s, &specs).unwrap();
        assert_eq!(e.summary.mean_quality_gain, 0.0);
        assert!(e.summary.deviation.mean_raw < 1e-12);
        for (_, o) in &e.episodes {
            assert!(o.transitions.iter().all(|t| t.r_d == 0.0));
        }
    }

    #[test]
    fn anchor_curve_trades_bits_for_quality() {
        let c = build_rd_curve(Policy::Anchor, &env(), &RD_QP_LEVELS, 0, 2).unwrap();
        for w in c.windows(2) {
            assert!(w[1].bitrate < w[0].bitrate);
            assert!(w[1].quality < w[0].quality);
        }
        assert_eq!(c, build_rd_curve(Policy::Anchor, &env(), &RD_QP_LEVELS, 0, 2).unwrap());
    }
}

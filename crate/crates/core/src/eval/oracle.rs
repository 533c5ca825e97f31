//! Exhaustive optimal allocation for GOPs small enough to enumerate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    build_gop_model_for, encode_frame, run_episode, EpisodeState, GopModel, GopStructure, Profile,
    DELTA_QP_LIMIT,
};
use crate::error::{Error, Result};
use crate::eval::policy::Policy;

/// Largest number of QP tuples the oracle will enumerate.
pub const ORACLE_BOUND: f64 = 1e7;
/// QP step of the oracle grid.
pub const ORACLE_STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// One QP per encoded frame, coding order.
    pub qps: Vec<f64>,
    pub total_bits: f64,
    /// Sum of per-frame quality.
    pub total_quality: f64,
    pub rate_deviation: f64,
    pub feasible: bool,
}

impl OracleSolution {
    /// Feasible beats infeasible; then quality, or deviation when neither
    /// is feasible.
    fn beats(&self, other: &Self) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.total_quality > other.total_quality,
            (false, false) => self.rate_deviation < other.rate_deviation,
        }
    }
}

/// Encodes `qps` from `ep0` and scores the result against its budget.
pub fn evaluate_allocation(
    model: &GopModel,
    ep0: &EpisodeState,
    qps: &[f64],
    tolerance: f64,
) -> Result<OracleSolution> {
    if qps.len() != model.episode_len() - ep0.frame_index {
        return Err(Error::Dimension {
            layer: "allocation".into(),
            expected: model.episode_len() - ep0.frame_index,
            actual: qps.len(),
        });
    }
    let mut ep = ep0.clone();
    let mut quality = 0.0;
    for &qp in qps {
        let out = encode_frame(model, &ep, qp)?;
        quality += out.quality;
        ep = out.next;
    }
    Ok(score(qps.to_vec(), &ep, quality, tolerance))
}

fn score(qps: Vec<f64>, end: &EpisodeState, total_quality: f64, tolerance: f64) -> OracleSolution {
    let rate_deviation = (end.bits_spent - end.r_gop).abs() / end.r_gop;
    OracleSolution {
        qps,
        total_bits: end.bits_spent,
        total_quality,
        rate_deviation,
        feasible: rate_deviation <= tolerance,
    }
}

/// Best allocation over base QP ± 5 at unit steps for every remaining frame:
/// highest total quality within `tolerance` of the budget, or the smallest
/// deviation when no tuple is within it. Ties go to the lexicographically
/// lowest QP tuple.
pub fn brute_force_allocate(
    model: &GopModel,
    ep0: &EpisodeState,
    tolerance: f64,
) -> Result<OracleSolution> {
    let frames = model.episode_len() - ep0.frame_index;
    let per_frame = (2.0 * DELTA_QP_LIMIT / ORACLE_STEP) as usize + 1;
    let size = (per_frame as f64).powi(frames as i32);
    if size > ORACLE_BOUND {
        return Err(Error::SearchSpaceExceeded {
            size,
            bound: ORACLE_BOUND,
        });
    }
    if frames == 0 {
        return Err(Error::EpisodeComplete);
    }
    let offsets: Vec<f64> = (0..per_frame)
        .map(|k| -DELTA_QP_LIMIT + k as f64 * ORACLE_STEP)
        .collect();

    // Each first-frame choice is searched independently; merging in order
    // keeps the tie-break deterministic.
    let partials: Vec<Result<Option<OracleSolution>>> = offsets
        .par_iter()
        .map(|&first| {
            let base = ep0.current_base_qp(model)?;
            let out = encode_frame(model, ep0, base + first)?;
            let mut search = Search {
                model,
                offsets: &offsets,
                tolerance,
                qps: vec![base + first],
                best: None,
            };
            search.descend(&out.next, out.quality)?;
            Ok(search.best)
        })
        .collect();
    let mut best: Option<OracleSolution> = None;
    for p in partials {
        if let Some(c) = p? {
            if best.as_ref().map_or(true, |b| c.beats(b)) {
                best = Some(c);
            }
        }
    }
    best.ok_or(Error::NoData("oracle found no allocation"))
}

struct Search<'a> {
    model: &'a GopModel,
    offsets: &'a [f64],
    tolerance: f64,
    qps: Vec<f64>,
    best: Option<OracleSolution>,
}

impl Search<'_> {
    fn descend(&mut self, ep: &EpisodeState, quality: f64) -> Result<()> {
        if ep.is_complete(self.model) {
            let cand = score(self.qps.clone(), ep, quality, self.tolerance);
            if self.best.as_ref().map_or(true, |b| cand.beats(b)) {
                self.best = Some(cand);
            }
            return Ok(());
        }
        let base = ep.current_base_qp(self.model)?;
        for &off in self.offsets {
            let out = encode_frame(self.model, ep, base + off)?;
            self.qps.push(base + off);
            self.descend(&out.next, quality + out.quality)?;
            self.qps.pop();
        }
        Ok(())
    }
}

pub const ORACLE_REPORT_SCHEMA: &str = "nfwpo.oracle-check.v1";

/// A chain GOP small enough for the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyInstance {
    pub frames: usize,
    pub profile: Profile,
    pub model_seed: u64,
    pub qp_level: f64,
    pub budget_factor: f64,
    pub tolerance: f64,
}

impl TinyInstance {
    pub fn build(&self) -> Result<(GopModel, EpisodeState)> {
        let model = build_gop_model_for(GopStructure::chain(self.frames)?, self.model_seed, self.profile);
        let ep0 = EpisodeState::with_budget_factor(&model, self.qp_level, self.budget_factor);
        Ok((model, ep0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleReport {
    pub schema: String,
    pub instance: TinyInstance,
    pub policy_name: String,
    pub oracle: OracleSolution,
    pub policy: OracleSolution,
    pub anchor: OracleSolution,
    /// Oracle quality minus policy quality.
    pub quality_gap: f64,
    /// Oracle quality minus anchor quality.
    pub oracle_gain: f64,
    /// Share of the oracle's gain the policy achieves; NaN when the oracle
    /// cannot beat the anchor.
    #[serde(deserialize_with = "crate::nan::deserialize")]
    pub captured_fraction: f64,
}

impl OracleReport {
    /// Structural checks on a (possibly deserialized) report.
    pub fn validate(&self) -> Result<()> {
        if self.schema != ORACLE_REPORT_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "unsupported oracle report schema {:?}",
                self.schema
            )));
        }
        let tol = self.instance.tolerance;
        for (name, s) in [("oracle", &self.oracle), ("policy", &self.policy), ("anchor", &self.anchor)] {
            if s.qps.len() != self.instance.frames {
                return Err(Error::InvalidConfig(format!(
                    "{name}: {} QPs for {} frames",
                    s.qps.len(),
                    self.instance.frames
                )));
            }
            if s.feasible != (s.rate_deviation <= tol) {
                return Err(Error::InvalidConfig(format!(
                    "{name}: feasibility flag disagrees with deviation {}",
                    s.rate_deviation
                )));
            }
        }
        let gap = self.oracle.total_quality - self.policy.total_quality;
        if (gap - self.quality_gap).abs() > 1e-9 {
            return Err(Error::InvalidConfig("quality_gap is inconsistent".into()));
        }
        Ok(())
    }
}

/// Runs `policy` greedily on the instance and scores it, the anchor and the
/// oracle side by side.
pub fn oracle_check(policy: Policy<'_>, instance: &TinyInstance) -> Result<OracleReport> {
    let (model, ep0) = instance.build()?;
    let tol = instance.tolerance;
    let oracle = brute_force_allocate(&model, &ep0, tol)?;
    let run = run_episode(&model, |s| policy.action(s), &ep0)?;
    let qps: Vec<f64> = run.frames.iter().map(|f| f.qp).collect();
    let policy_sol = evaluate_allocation(&model, &ep0, &qps, tol)?;
    let base: Vec<f64> = (0..model.episode_len())
        .map(|i| ep0.base_qp_of(&model, model.structure.leading + i))
        .collect();
    let anchor = evaluate_allocation(&model, &ep0, &base, tol)?;
    let oracle_gain = oracle.total_quality - anchor.total_quality;
    let captured_fraction = if oracle_gain > 0.0 {
        (policy_sol.total_quality - anchor.total_quality) / oracle_gain
    } else {
        f64::NAN
    };
    Ok(OracleReport {
        schema: ORACLE_REPORT_SCHEMA.into(),
        instance: instance.clone(),
        policy_name: policy.name().into(),
        quality_gap: oracle.total_quality - policy_sol.total_quality,
        oracle_gain,
        captured_fraction,
        oracle,
        policy: policy_sol,
        anchor,
    })
}

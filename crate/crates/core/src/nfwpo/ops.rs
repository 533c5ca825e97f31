//! Feasible sets, projection, Frank-Wolfe direction and the actor regression.
//!
//! Everything here works in absolute QP units; the actor and the critics see
//! the delta `qp - base_qp`.

use serde::{Deserialize, Serialize};

use crate::agents::{ActionCritic, Actor, ProjectionMode, TrainerConfig};
use crate::codec::StateVector;
use crate::error::{Error, Result};
use crate::nn::ParamVector;

/// Evenly spaced delta-QP grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaGrid {
    pub lo: f64,
    pub hi: f64,
    /// Number of intervals; the grid has `intervals + 1` points.
    pub intervals: usize,
}

impl DeltaGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self {
            lo,
            hi,
            intervals: ((hi - lo) / step).round() as usize,
        }
    }

    pub fn from_config(config: &TrainerConfig) -> Self {
        let [lo, hi] = config.delta_qp_range;
        Self::new(lo, hi, config.qp_grid_step)
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Computed from the index so the endpoints are exact.
    pub fn delta(&self, k: usize) -> f64 {
        if k == self.intervals {
            return self.hi;
        }
        self.lo + (k as f64 * (self.hi - self.lo)) / self.intervals as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub base_qp: f64,
    /// Ascending absolute QPs.
    pub grid: Vec<f64>,
    pub mask: Vec<bool>,
    pub lo: f64,
    pub hi: f64,
    pub fallback_used: bool,
}

impl FeasibleSet {
    pub fn hull_contains(&self, qp: f64) -> bool {
        self.lo <= qp && qp <= self.hi
    }

    pub fn feasible_points(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&q, _)| q)
    }

    /// Hull built from an explicit mask; argmax fallback is the caller's job.
    pub fn from_mask(base_qp: f64, grid: Vec<f64>, mask: Vec<bool>) -> Option<Self> {
        let first = mask.iter().position(|&m| m)?;
        let last = mask.iter().rposition(|&m| m)?;
        Some(Self {
            base_qp,
            lo: grid[first],
            hi: grid[last],
            grid,
            mask,
            fallback_used: false,
        })
    }
}

/// `C(s) = {qp : Q_R(s, qp) >= ε}` on the grid around `base_qp`.
pub fn feasible_set<C: ActionCritic + ?Sized>(
    q_r: &C,
    state: &StateVector,
    epsilon: f64,
    base_qp: f64,
    grid: &DeltaGrid,
) -> Result<FeasibleSet> {
    let deltas: Vec<f64> = (0..grid.len()).map(|k| grid.delta(k)).collect();
    let values = q_r.values(state, &deltas)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rate critic output".into()));
    }
    let qps: Vec<f64> = deltas.iter().map(|d| base_qp + d).collect();
    let mask: Vec<bool> = values.iter().map(|&v| v >= epsilon).collect();
    if let Some(set) = FeasibleSet::from_mask(base_qp, qps.clone(), mask.clone()) {
        return Ok(set);
    }
    // Strict comparison keeps the first, i.e. lowest-QP, maximizer.
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    Ok(FeasibleSet {
        base_qp,
        lo: qps[best],
        hi: qps[best],
        grid: qps,
        mask,
        fallback_used: true,
    })
}

pub fn project(qp: f64, set: &FeasibleSet, mode: ProjectionMode) -> f64 {
    if set.fallback_used {
        return set.lo;
    }
    match mode {
        ProjectionMode::Hull => qp.clamp(set.lo, set.hi),
        ProjectionMode::NearestGridPoint => {
            let mut best = f64::NAN;
            let mut best_dist = f64::INFINITY;
            for p in set.feasible_points() {
                let d = (p - qp).abs();
                if d < best_dist {
                    best = p;
                    best_dist = d;
                }
            }
            best
        }
    }
}

/// Maximizer of `<c, dQ_D/da>` over the hull, evaluated at `projected`.
pub fn fw_direction<C: ActionCritic + ?Sized>(
    q_d: &C,
    state: &StateVector,
    set: &FeasibleSet,
    projected: f64,
) -> Result<f64> {
    let g = q_d.action_gradient(state, projected - set.base_qp)?;
    if !g.is_finite() {
        return Err(Error::NonFinite("distortion critic action gradient".into()));
    }
    Ok(direction_for_gradient(g, set, projected))
}

pub fn direction_for_gradient(gradient: f64, set: &FeasibleSet, projected: f64) -> f64 {
    if gradient > 0.0 {
        set.hi
    } else if gradient < 0.0 {
        set.lo
    } else {
        projected
    }
}

/// `p + α (c - p)`, kept inside the segment against rounding.
pub fn reference_action(projected: f64, direction: f64, alpha: f64) -> f64 {
    let a = projected + alpha * (direction - projected);
    a.clamp(projected.min(direction), projected.max(direction))
}

/// `(π(s) - ã)²` in delta units and its parameter gradient.
pub fn actor_loss_and_gradient(
    actor: &Actor,
    params: &ParamVector,
    state: &StateVector,
    reference_delta: f64,
) -> Result<(f64, ParamVector)> {
    let trace = actor.net.mlp.forward_trace(params, &state.network_input())?;
    let residual = trace.output()[0] - reference_delta;
    let g = actor
        .net
        .mlp
        .backward_from_trace(params, &trace, &[2.0 * residual])?;
    Ok((residual * residual, g.params))
}

/// One optimizer step toward the reference; returns the pre-step loss.
pub fn actor_update(actor: &mut Actor, state: &StateVector, reference_delta: f64) -> Result<f64> {
    if !reference_delta.is_finite() {
        return Err(Error::NonFinite("reference action".into()));
    }
    let (loss, grad) = actor_loss_and_gradient(actor, &actor.net.params, state, reference_delta)?;
    actor.apply_gradient(&grad)?;
    Ok(loss)
}

/// Norm of `d/dθ Q_D(s, clamp(π(s)))` for an actor with a clamping
/// projection layer on its output.
pub fn zero_gradient_probe<C: ActionCritic + ?Sized>(
    actor: &Actor,
    q_d: &C,
    state: &StateVector,
    set: &FeasibleSet,
) -> Result<f64> {
    let grad = projection_layer_gradient(actor, &actor.net.params, q_d, state, set)?;
    Ok(grad.norm())
}

pub fn projection_layer_gradient<C: ActionCritic + ?Sized>(
    actor: &Actor,
    params: &ParamVector,
    q_d: &C,
    state: &StateVector,
    set: &FeasibleSet,
) -> Result<ParamVector> {
    let raw = set.base_qp + actor.net.mlp.forward_scalar(params, &state.network_input())?;
    let clamped = raw.clamp(set.lo, set.hi);
    let dclamp = if set.lo < raw && raw < set.hi { 1.0 } else { 0.0 };
    let dq = q_d.action_gradient(state, clamped - set.base_qp)?;
    let g = actor
        .net
        .mlp
        .backward(params, &state.network_input(), &[dq * dclamp])?;
    Ok(g.params)
}

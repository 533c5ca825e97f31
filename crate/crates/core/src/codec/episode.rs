use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codec::gop::FrameType;
use crate::codec::model::GopModel;
use crate::codec::state::{extract_state, terminal_state, StateVector};
use crate::error::{Error, Result};

/// Agent actions are offsets from the frame-type base QP within this bound.
pub const DELTA_QP_LIMIT: f64 = 5.0;
const QP_RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseQps {
    pub i: f64,
    pub b: f64,
    pub low_b: f64,
}

impl BaseQps {
    /// `QP_l - 3`, `QP_l - 2` and `QP_l + 2` for I, B and b frames.
    pub fn from_level(qp_level: f64) -> Self {
        Self {
            i: qp_level - 3.0,
            b: qp_level - 2.0,
            low_b: qp_level + 2.0,
        }
    }

    pub fn for_type(&self, t: FrameType) -> f64 {
        match t {
            FrameType::I => self.i,
            FrameType::B => self.b,
            FrameType::LowB => self.low_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub frame_index: usize,
    pub bits_spent: f64,
    /// QPs of the frames encoded so far in this episode, in coding order.
    pub chosen_qps: Vec<f64>,
    pub r_gop: f64,
    pub base_qps: BaseQps,
    pub qp_level: f64,
}

impl EpisodeState {
    pub fn fresh(r_gop: f64, qp_level: f64) -> Self {
        Self {
            frame_index: 0,
            bits_spent: 0.0,
            chosen_qps: Vec::new(),
            r_gop,
            base_qps: BaseQps::from_level(qp_level),
            qp_level,
        }
    }

    /// Budget set to the anchor policy's bits scaled by `factor`.
    pub fn with_budget_factor(model: &GopModel, qp_level: f64, factor: f64) -> Self {
        let base = BaseQps::from_level(qp_level);
        Self::fresh(anchor_bits(model, &base) * factor, qp_level)
    }

    pub fn remaining_bits_fraction(&self) -> f64 {
        (self.r_gop - self.bits_spent) / self.r_gop
    }

    pub fn is_complete(&self, model: &GopModel) -> bool {
        self.frame_index >= model.episode_len()
    }

    /// QP a coding-order frame was (or, for leading frames, is assumed to
    /// have been) coded at.
    fn coded_qp(&self, model: &GopModel, coding_index: usize) -> f64 {
        let lead = model.structure.leading;
        if coding_index < lead {
            self.base_qps
                .for_type(model.structure.frames[coding_index].frame_type)
        } else {
            self.chosen_qps[coding_index - lead]
        }
    }

    pub fn base_qp_of(&self, model: &GopModel, coding_index: usize) -> f64 {
        self.base_qps
            .for_type(model.structure.frames[coding_index].frame_type)
    }

    /// Base QP of the frame about to be encoded.
    pub fn current_base_qp(&self, model: &GopModel) -> Result<f64> {
        if self.is_complete(model) {
            return Err(Error::EpisodeComplete);
        }
        Ok(self.base_qp_of(model, model.structure.leading + self.frame_index))
    }
}

/// Total bits of the episode frames at their base QPs.
pub fn anchor_bits(model: &GopModel, base: &BaseQps) -> f64 {
    let s = &model.structure;
    (s.leading..s.frames.len())
        .map(|ci| model.rate(ci, base.for_type(s.frames[ci].frame_type)))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutcome {
    pub bits: f64,
    pub quality: f64,
    /// Quality of the same frame under the anchor policy (base QP here and at
    /// every reference).
    pub anchor_quality: f64,
    pub next: EpisodeState,
}

pub fn encode_frame(model: &GopModel, ep: &EpisodeState, qp: f64) -> Result<EncodeOutcome> {
    if ep.is_complete(model) {
        return Err(Error::EpisodeComplete);
    }
    let ci = model.structure.leading + ep.frame_index;
    let base = ep.base_qp_of(model, ci);
    let (lo, hi) = (base - DELTA_QP_LIMIT, base + DELTA_QP_LIMIT);
    if !qp.is_finite() || qp < lo - QP_RANGE_SLACK || qp > hi + QP_RANGE_SLACK {
        return Err(Error::QpOutOfRange { qp, lo, hi });
    }
    let refs = &model.structure.frames[ci].references;
    let offset = if refs.is_empty() {
        0.0
    } else {
        refs.iter()
            .map(|&r| ep.coded_qp(model, r) - ep.base_qp_of(model, r))
            .sum::<f64>()
            / refs.len() as f64
    };
    let bits = model.rate(ci, qp);
    let quality = model.quality(ci, qp, offset);
    let anchor_quality = model.quality(ci, base, 0.0);
    let mut next = ep.clone();
    next.frame_index += 1;
    next.bits_spent += bits;
    next.chosen_qps.push(qp);
    Ok(EncodeOutcome {
        bits,
        quality,
        anchor_quality,
        next,
    })
}

/// Quality gain over the anchor encode.
pub fn distortion_reward(quality: f64, anchor_quality: f64) -> f64 {
    quality - anchor_quality
}

/// Zero except at the last frame, where it is the negative absolute relative
/// deviation from the GOP budget.
pub fn rate_reward(ep: &EpisodeState, is_last_frame: bool) -> f64 {
    if is_last_frame {
        -(ep.r_gop - ep.bits_spent).abs() / ep.r_gop
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVector,
    /// Executed delta QP.
    pub action: f64,
    pub r_d: f64,
    pub r_r: f64,
    pub next_state: StateVector,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub coding_index: usize,
    pub poc: usize,
    pub frame_type: FrameType,
    pub temporal_id: u8,
    pub qp: f64,
    pub bits: f64,
    pub quality: f64,
    pub anchor_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub r_gop: f64,
    pub total_bits: f64,
    /// `|R_GOP - total| / R_GOP`.
    pub rate_deviation: f64,
    /// `(total - R_GOP) / R_GOP`.
    pub signed_deviation: f64,
    /// Sum of distortion rewards, i.e. total quality gain over the anchor.
    pub quality_gain: f64,
    pub mean_quality: f64,
    pub mean_anchor_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub transitions: Vec<Transition>,
    pub frames: Vec<FrameRecord>,
    pub summary: EpisodeSummary,
    pub final_state: EpisodeState,
}

/// Encodes every frame of the GOP with `policy` choosing the delta QP.
pub fn run_episode<P>(model: &GopModel, mut policy: P, ep0: &EpisodeState) -> Result<EpisodeOutcome>
where
    P: FnMut(&StateVector) -> Result<f64>,
{
    let n = model.episode_len();
    let mut ep = ep0.clone();
    let mut transitions = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    let mut state = extract_state(model, &ep)?;
    while !ep.is_complete(model) {
        let delta = policy(&state)?;
        if !delta.is_finite() {
            return Err(Error::NonFinite(format!(
                "policy action at frame {}",
                ep.frame_index
            )));
        }
        let qp = state.base_qp + delta;
        let out = encode_frame(model, &ep, qp)?;
        let ci = model.structure.leading + ep.frame_index;
        let info = &model.structure.frames[ci];
        let terminal = out.next.is_complete(model);
        let next_state = if terminal {
            terminal_state(&out.next)
        } else {
            extract_state(model, &out.next)?
        };
        transitions.push(Transition {
            state,
            action: delta,
            r_d: distortion_reward(out.quality, out.anchor_quality),
            r_r: rate_reward(&out.next, terminal),
            next_state,
            terminal,
        });
        frames.push(FrameRecord {
            coding_index: ci,
            poc: info.poc,
            frame_type: info.frame_type,
            temporal_id: info.temporal_id,
            qp,
            bits: out.bits,
            quality: out.quality,
            anchor_quality: out.anchor_quality,
        });
        state = next_state;
        ep = out.next;
    }
    let total_bits: f64 = frames.iter().map(|f| f.bits).sum();
    let count = frames.len() as f64;
    let summary = EpisodeSummary {
        r_gop: ep.r_gop,
        total_bits,
        rate_deviation: (ep.r_gop - total_bits).abs() / ep.r_gop,
        signed_deviation: (total_bits - ep.r_gop) / ep.r_gop,
        quality_gain: transitions.iter().map(|t| t.r_d).sum(),
        mean_quality: frames.iter().map(|f| f.quality).sum::<f64>() / count,
        mean_anchor_quality: frames.iter().map(|f| f.anchor_quality).sum::<f64>() / count,
    };
    Ok(EpisodeOutcome {
        transitions,
        frames,
        summary,
        final_state: ep,
    })
}

pub const TRACE_SCHEMA: &str = "nfwpo.trace.v1";

/// One row per frame: `frame,type,tid,qp,bits,quality`.
pub fn write_trace_csv<W: Write>(w: &mut W, frames: &[FrameRecord]) -> std::io::Result<()> {
    writeln!(w, "# schema: {TRACE_SCHEMA}")?;
    writeln!(w, "frame,type,tid,qp,bits,quality")?;
    for f in frames {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            f.poc, f.frame_type, f.temporal_id, f.qp, f.bits, f.quality
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::gop::GopStructure;
    use crate::codec::model::{build_gop_model, build_gop_model_for, Profile};

    fn fresh(model: &GopModel) -> EpisodeState {
        EpisodeState::with_budget_factor(model, 32.0, 1.0)
    }

    #[test]
    fn anchor_qp_gives_zero_distortion_reward() {
        let m = build_gop_model(3, Profile::Textured);
        let mut ep = fresh(&m);
        while !ep.is_complete(&m) {
            let base = ep.current_base_qp(&m).unwrap();
            let out = encode_frame(&m, &ep, base).unwrap();
            assert_eq!(distortion_reward(out.quality, out.anchor_quality), 0.0);
            ep = out.next;
        }
    }

    #[test]
    fn lower_qp_costs_more_bits_and_never_less_quality() {
        let m = build_gop_model(5, Profile::Easy);
        let ep = fresh(&m);
        let a = encode_frame(&m, &ep, 28.0).unwrap();
        let b = encode_frame(&m, &ep, 30.5).unwrap();
        assert!(a.bits > b.bits);
        assert!(a.quality >= b.quality);
    }

    #[test]
    fn coarse_references_hurt_dependent_frame() {
        let m = build_gop_model(9, Profile::MotionHeavy);
        // Encode I (POC 16) and B (POC 8) at two different offsets, then the
        // first b-frame at its base QP.
        let run = |delta: f64| {
            let mut ep = fresh(&m);
            for _ in 0..2 {
                let base = ep.current_base_qp(&m).unwrap();
                ep = encode_frame(&m, &ep, base + delta).unwrap().next;
            }
            let base = ep.current_base_qp(&m).unwrap();
            encode_frame(&m, &ep, base).unwrap().quality
        };
        assert!(m.frames[3].dependency > 0.0);
        assert!(run(4.0) < run(-4.0));
    }

    #[test]
    fn encode_errors() {
        let m = build_gop_model(1, Profile::Easy);
        let ep = fresh(&m);
        let base = ep.current_base_qp(&m).unwrap();
        assert!(matches!(
            encode_frame(&m, &ep, base + 5.5),
            Err(Error::QpOutOfRange { .. })
        ));
        assert!(encode_frame(&m, &ep, base - 5.0).is_ok());
        let mut done = ep.clone();
        done.frame_index = 16;
        assert!(matches!(
            encode_frame(&m, &done, base),
            Err(Error::EpisodeComplete)
        ));
    }

    #[test]
    fn distortion_reward_values() {
        assert_eq!(distortion_reward(80.0, 80.0), 0.0);
        assert_eq!(distortion_reward(83.5, 80.0), 3.5);
        assert_eq!(distortion_reward(70.0, 75.0), -5.0);
    }

    #[test]
    fn rate_reward_values() {
        let mut ep = EpisodeState::fresh(1000.0, 32.0);
        ep.bits_spent = 1050.0;
        assert_eq!(rate_reward(&ep, false), 0.0);
        assert_eq!(rate_reward(&ep, true), -0.05);
        ep.bits_spent = 1000.0;
        assert_eq!(rate_reward(&ep, true), 0.0);
    }

    #[test]
    fn state_at_fresh_and_half_spent() {
        let m = build_gop_model(2, Profile::Easy);
        let mut ep = fresh(&m);
        let s = extract_state(&m, &ep).unwrap();
        assert_eq!(s.remaining_bits_fraction, 1.0);
        assert_eq!(s.remaining_frames, 16.0);
        ep.bits_spent = ep.r_gop / 2.0;
        assert_eq!(extract_state(&m, &ep).unwrap().remaining_bits_fraction, 0.5);
    }

    #[test]
    fn temporal_id_feature_follows_hierarchy() {
        let m = build_gop_model(2, Profile::Easy);
        let mut ep = fresh(&m);
        let mut seen = Vec::new();
        while !ep.is_complete(&m) {
            let s = extract_state(&m, &ep).unwrap();
            let t = m.structure.episode_frame(ep.frame_index).frame_type;
            seen.push((t, s.temporal_id));
            ep = encode_frame(&m, &ep, s.base_qp).unwrap().next;
        }
        for (t, tid) in seen {
            let expected = match t {
                FrameType::I => 0.0,
                FrameType::B => 1.0,
                FrameType::LowB => 2.0,
            };
            assert_eq!(tid, expected);
        }
    }

    #[test]
    fn zero_delta_episode_accounting() {
        let m = build_gop_model(4, Profile::Textured);
        let ep0 = EpisodeState::with_budget_factor(&m, 27.0, 1.3);
        let out = run_episode(&m, |_| Ok(0.0), &ep0).unwrap();
        assert_eq!(out.transitions.len(), 16);
        for (f, info) in out.frames.iter().zip(&m.structure.frames[1..]) {
            assert_eq!(f.qp, ep0.base_qps.for_type(info.frame_type));
        }
        let sum: f64 = out.frames.iter().map(|f| f.bits).sum();
        assert_eq!(out.summary.total_bits, sum);
        assert_eq!(out.final_state.bits_spent, sum);
        let last = out.transitions.last().unwrap();
        assert!(last.terminal);
        assert_eq!(out.summary.rate_deviation, -last.r_r);
        assert!(out.transitions[..15].iter().all(|t| t.r_r == 0.0 && !t.terminal));
        assert_eq!(out.summary.quality_gain, 0.0);
    }

    #[test]
    fn remaining_frames_counts_down() {
        let m = build_gop_model(4, Profile::Easy);
        let out = run_episode(&m, |_| Ok(1.0), &fresh(&m)).unwrap();
        for (i, t) in out.transitions.iter().enumerate() {
            assert_eq!(t.state.remaining_frames, (16 - i) as f64);
            assert_eq!(t.next_state.remaining_frames, (15 - i) as f64);
            assert!(t.state.is_finite());
        }
    }

    #[test]
    fn non_finite_policy_is_an_error() {
        let m = build_gop_model(4, Profile::Easy);
        let err = run_episode(&m, |_| Ok(f64::NAN), &fresh(&m)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn chain_episode_uses_all_frames() {
        let m = build_gop_model_for(GopStructure::chain(3).unwrap(), 1, Profile::Easy);
        let ep0 = EpisodeState::with_budget_factor(&m, 32.0, 1.0);
        let out = run_episode(&m, |_| Ok(0.0), &ep0).unwrap();
        assert_eq!(out.transitions.len(), 3);
        assert!(out.summary.rate_deviation < 1e-12);
    }

    #[test]
    fn trace_csv_rows() {
        let m = build_gop_model(4, Profile::Easy);
        let out = run_episode(&m, |_| Ok(0.0), &fresh(&m)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.frames).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2 + 16);
        assert_eq!(lines[1], "frame,type,tid,qp,bits,quality");
        assert!(lines[2].starts_with("16,I,0,29,"));
    }
}

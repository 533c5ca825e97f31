use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    B,
    /// Non-referenced bi-predicted frame, written `b`.
    #[serde(rename = "b")]
    LowB,
}

impl FrameType {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::B => "B",
            FrameType::LowB => "b",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInfo {
    /// Display order.
    pub poc: usize,
    pub frame_type: FrameType,
    pub temporal_id: u8,
    /// Coding-order indices of the frames this one predicts from.
    pub references: Vec<usize>,
}

/// Frames in coding order. The first `leading` frames were coded before the
/// episode starts (at their base QP) and only serve as references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GopStructure {
    pub frames: Vec<FrameInfo>,
    pub leading: usize,
}

impl GopStructure {
    /// Two-level hierarchical-B GOP: I-frames at POC 0 and `size`, one B-frame
    /// at `size / 2`, every other frame a b-frame predicting from its two
    /// neighbouring anchors. POC 0 is the previous GOP's trailing I-frame.
    pub fn hierarchical_b(size: usize) -> Result<Self> {
        if size < 2 || size % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "hierarchical GOP size must be even and >= 2, got {size}"
            )));
        }
        let mid = size / 2;
        let mut frames = vec![
            FrameInfo {
                poc: 0,
                frame_type: FrameType::I,
                temporal_id: 0,
                references: vec![],
            },
            FrameInfo {
                poc: size,
                frame_type: FrameType::I,
                temporal_id: 0,
                references: vec![],
            },
            FrameInfo {
                poc: mid,
                frame_type: FrameType::B,
                temporal_id: 1,
                references: vec![0, 1],
            },
        ];
        for poc in (1..size).filter(|&p| p != mid) {
            let references = if poc < mid { vec![0, 2] } else { vec![2, 1] };
            frames.push(FrameInfo {
                poc,
                frame_type: FrameType::LowB,
                temporal_id: 2,
                references,
            });
        }
        let s = Self { frames, leading: 1 };
        s.validate()?;
        Ok(s)
    }

    /// `n`-frame prediction chain `I -> B -> ... -> b`, each frame referencing
    /// its predecessor. Used for brute-force-sized instances.
    pub fn chain(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("chain needs at least one frame".into()));
        }
        let frames = (0..n)
            .map(|i| {
                let (frame_type, temporal_id) = match i {
                    0 => (FrameType::I, 0),
                    _ if i + 1 == n => (FrameType::LowB, 2),
                    _ => (FrameType::B, 1),
                };
                FrameInfo {
                    poc: i,
                    frame_type,
                    temporal_id,
                    references: if i == 0 { vec![] } else { vec![i - 1] },
                }
            })
            .collect();
        let s = Self { frames, leading: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.leading >= self.frames.len() {
            return Err(Error::InvalidConfig(
                "GOP structure has no frames to encode".into(),
            ));
        }
        for (ci, f) in self.frames.iter().enumerate() {
            if let Some(&r) = f.references.iter().find(|&&r| r >= ci) {
                return Err(Error::InvalidConfig(format!(
                    "frame {ci} (POC {}) references coding index {r}, which does not precede it",
                    f.poc
                )));
            }
        }
        Ok(())
    }

    /// Number of frames decided within one episode (`N`).
    pub fn episode_len(&self) -> usize {
        self.frames.len() - self.leading
    }

    /// Frame decided at step `i` of the episode.
    pub fn episode_frame(&self, i: usize) -> &FrameInfo {
        &self.frames[self.leading + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gop16_layout() {
        let g = GopStructure::hierarchical_b(16).unwrap();
        assert_eq!(g.episode_len(), 16);
        assert_eq!(g.frames.len(), 17);
        let by_poc = |poc: usize| g.frames.iter().find(|f| f.poc == poc).unwrap();
        assert_eq!(by_poc(0).frame_type, FrameType::I);
        assert_eq!(by_poc(16).frame_type, FrameType::I);
        assert_eq!(by_poc(8).frame_type, FrameType::B);
        for poc in (1..16).filter(|&p| p != 8) {
            assert_eq!(by_poc(poc).frame_type, FrameType::LowB);
            assert_eq!(by_poc(poc).temporal_id, 2);
        }
        assert_eq!(by_poc(8).temporal_id, 1);
        assert_eq!(by_poc(16).temporal_id, 0);

        // b-frames predict from their surrounding anchors.
        let refs_poc = |poc: usize| -> Vec<usize> {
            by_poc(poc).references.iter().map(|&r| g.frames[r].poc).collect()
        };
        assert_eq!(refs_poc(8), vec![0, 16]);
        assert_eq!(refs_poc(3), vec![0, 8]);
        assert_eq!(refs_poc(12), vec![8, 16]);
    }

    #[test]
    fn references_precede_in_coding_order() {
        for g in [
            GopStructure::hierarchical_b(16).unwrap(),
            GopStructure::hierarchical_b(2).unwrap(),
            GopStructure::chain(5).unwrap(),
        ] {
            for (ci, f) in g.frames.iter().enumerate() {
                assert!(f.references.iter().all(|&r| r < ci));
            }
        }
    }

    #[test]
    fn chain_types() {
        let g = GopStructure::chain(3).unwrap();
        let types: Vec<_> = g.frames.iter().map(|f| f.frame_type).collect();
        assert_eq!(types, vec![FrameType::I, FrameType::B, FrameType::LowB]);
        assert_eq!(g.episode_len(), 3);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GopStructure::hierarchical_b(7).is_err());
        assert!(GopStructure::chain(0).is_err());
        let bad = GopStructure {
            frames: vec![FrameInfo {
                poc: 0,
                frame_type: FrameType::B,
                temporal_id: 1,
                references: vec![0],
            }],
            leading: 0,
        };
        assert!(bad.validate().is_err());
    }
}

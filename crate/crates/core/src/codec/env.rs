//! Episode factories: which GOP model and budget each training or evaluation
//! episode sees.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::episode::EpisodeState;
use crate::codec::gop::GopStructure;
use crate::codec::model::{build_gop_model_for, GopModel, Profile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StructureKind {
    HierarchicalB { size: usize },
    Chain { frames: usize },
}

impl StructureKind {
    pub fn build(self) -> Result<GopStructure> {
        match self {
            StructureKind::HierarchicalB { size } => GopStructure::hierarchical_b(size),
            StructureKind::Chain { frames } => GopStructure::chain(frames),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub structure: StructureKind,
    pub profiles: Vec<Profile>,
    pub qp_levels: Vec<f64>,
    /// Multipliers on the anchor policy's bits giving `R_GOP`.
    pub budget_factors: Vec<f64>,
    /// Pin every episode to one model seed instead of drawing a fresh GOP.
    pub fixed_model_seed: Option<u64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            structure: StructureKind::HierarchicalB { size: 16 },
            profiles: vec![Profile::Easy],
            qp_levels: vec![32.0],
            budget_factors: vec![0.7, 1.0, 1.3],
            fixed_model_seed: None,
        }
    }
}

/// One fully specified episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub model_seed: u64,
    pub profile: Profile,
    pub qp_level: f64,
    pub budget_factor: f64,
}

impl EpisodeSpec {
    pub fn instantiate(&self, structure: &GopStructure) -> (GopModel, EpisodeState) {
        let model = build_gop_model_for(structure.clone(), self.model_seed, self.profile);
        let ep = EpisodeState::with_budget_factor(&model, self.qp_level, self.budget_factor);
        (model, ep)
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::InvalidConfig("env.profiles: must not be empty".into()));
        }
        if self.qp_levels.is_empty() || self.qp_levels.iter().any(|q| !(1.0..=51.0).contains(q)) {
            return Err(Error::InvalidConfig(
                "env.qp_levels: need at least one level within [1, 51]".into(),
            ));
        }
        if self.budget_factors.is_empty()
            || self.budget_factors.iter().any(|f| !(f.is_finite() && *f > 0.0))
        {
            return Err(Error::InvalidConfig(
                "env.budget_factors: need at least one positive factor".into(),
            ));
        }
        self.structure.build()?;
        Ok(())
    }

    pub fn sample_spec<R: Rng + ?Sized>(&self, rng: &mut R) -> EpisodeSpec {
        let model_seed = rng.gen::<u64>();
        EpisodeSpec {
            model_seed: self.fixed_model_seed.unwrap_or(model_seed),
            profile: *self.profiles.choose(rng).expect("validated"),
            qp_level: *self.qp_levels.choose(rng).expect("validated"),
            budget_factor: *self.budget_factors.choose(rng).expect("validated"),
        }
    }

    /// Deterministic evaluation grid: every profile, level and budget factor
    /// crossed with `gops_per_cell` model seeds derived from `seed`.
    pub fn evaluation_specs(&self, seed: u64, gops_per_cell: usize) -> Vec<EpisodeSpec> {
        let mut out = Vec::new();
        for &profile in &self.profiles {
            for &qp_level in &self.qp_levels {
                for &budget_factor in &self.budget_factors {
                    for k in 0..gops_per_cell {
                        let model_seed = self.fixed_model_seed.unwrap_or_else(|| {
                            crate::seed::derive(seed, &format!("eval-gop-{k}"))
                        });
                        out.push(EpisodeSpec {
                            model_seed,
                            profile,
                            qp_level,
                            budget_factor,
                        });
                    }
                }
            }
        }
        out
    }
}

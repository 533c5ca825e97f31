//! Run configuration file. Every section is optional; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::TrainerConfig;
use crate::baselines::{DualCriticConfig, SingleCriticConfig};
use crate::codec::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::RATE_TOLERANCE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleSection {
    pub lambda: f64,
}

impl Default for SingleSection {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualSection {
    pub tolerance: f64,
}

impl Default for DualSection {
    fn default() -> Self {
        Self {
            tolerance: RATE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Evaluation GOPs per (profile, level, budget factor) cell.
    pub gops_per_cell: usize,
    pub qp_levels: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            gops_per_cell: 4,
            qp_levels: crate::eval::RD_QP_LEVELS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub env: EnvConfig,
    pub single: SingleSection,
    pub dual: DualSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::default(),
            env: EnvConfig {
                qp_levels: vec![27.0, 32.0],
                ..EnvConfig::default()
            },
            single: SingleSection::default(),
            dual: DualSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.env.validate()?;
        self.single_critic().validate()?;
        self.dual_critic().validate()?;
        if self.eval.gops_per_cell == 0 {
            return Err(Error::InvalidConfig("eval.gops_per_cell: must be positive".into()));
        }
        if self.eval.qp_levels.len() < 4 {
            return Err(Error::InvalidConfig(
                "eval.qp_levels: an R-D curve needs at least 4 levels".into(),
            ));
        }
        Ok(())
    }

    pub fn single_critic(&self) -> SingleCriticConfig {
        SingleCriticConfig {
            trainer: self.trainer.clone(),
            lambda: self.single.lambda,
        }
    }

    pub fn dual_critic(&self) -> DualCriticConfig {
        DualCriticConfig {
            trainer: self.trainer.clone(),
            tolerance: self.dual.tolerance,
        }
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn typos_are_errors() {
        let e = RunConfig::from_toml_str("[trainer]\nepisodez = 3\n").unwrap_err();
        assert!(e.to_string().contains("episodez"));
        assert!(RunConfig::from_toml_str("[trainr]\n").is_err());
    }

    #[test]
    fn field_level_messages() {
        let e = RunConfig::from_toml_str("[trainer]\nbatch_size = 0\n").unwrap_err();
        assert!(e.to_string().contains("batch_size"));
        let e = RunConfig::from_toml_str("[single]\nlambda = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("lambda"));
    }

    #[test]
    fn hash_tracks_content() {
        let mut c = RunConfig::default();
        let h = c.hash();
        c.trainer.seed = 1;
        assert_ne!(c.hash(), h);
    }
}

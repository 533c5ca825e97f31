use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cli::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "nfwpo.manifest.v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    /// RFC 3339, UTC.
    pub started_at: String,
    pub finished_at: String,
    /// Relative to the run directory.
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, method: &str, config: &RunConfig) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            method: method.into(),
            seed: config.trainer.seed,
            config_hash: config.hash(),
            config: config.clone(),
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn finish(&mut self, outputs: Vec<String>, summary: serde_json::Value) {
        self.finished_at = now();
        self.outputs = outputs;
        self.summary = summary;
    }

    /// Schema and stored-config hash agree.
    pub fn verify(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "unsupported manifest schema {:?}",
                self.schema
            )));
        }
        let h = self.config.hash();
        if h != self.config_hash {
            return Err(Error::InvalidConfig(format!(
                "manifest config hash {} does not match stored config ({h})",
                self.config_hash
            )));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: Self = serde_json::from_str(&text)?;
        m.verify()?;
        Ok(m)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_recomputable_from_the_stored_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("train", "nfwpo", &RunConfig::default());
        m.finish(vec!["metrics.csv".into()], serde_json::json!({"x": 1}));
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn tampered_config_is_detected() {
        let mut m = RunManifest::new("train", "nfwpo", &RunConfig::default());
        m.config.trainer.episodes += 1;
        assert!(m.verify().is_err());
    }
}

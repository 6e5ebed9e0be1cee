//! Run manifest: enough to trace any result directory back to the exact
//! configuration and code that produced it. Deliberately free of
//! timestamps and host details so reruns produce byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand that produced the directory.
    pub command: String,
    /// SHA-256 of the canonical config serialization.
    pub config_hash: String,
    pub seed: u64,
    pub core_version: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cli_version: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: cfg.config_hash(),
            seed,
            core_version: env!("CARGO_PKG_VERSION").to_string(),
            cli_version: None,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("bad manifest: {e}")))
    }

    /// Write `run_manifest.toml` into a directory, creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("run_manifest.toml");
        std::fs::write(&path, self.to_toml_string())?;
        Ok(path)
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use antispoof::pipeline::sha256_hex;

use crate::RunConfig;

/// Record of one command invocation: enough to rerun it and to check that
/// its inputs have not changed.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub deterministic: bool,
    /// Hash of the feature (CNN) or preprocessing (SincNet) settings.
    pub input_hash: Option<String>,
    /// Input file path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Command-specific settings not covered by the run config.
    pub notes: BTreeMap<String, String>,
    pub split: Option<SplitRecord>,
    pub config: Option<RunConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitRecord {
    pub train_speakers: Vec<String>,
    pub valid_speakers: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, deterministic: bool) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            deterministic,
            ..Self::default()
        }
    }

    pub fn with_config(mut self, cfg: &RunConfig) -> Self {
        self.seed = Some(cfg.seed);
        self.config = Some(cfg.clone());
        self
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let hash = file_hash(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serialising manifest")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

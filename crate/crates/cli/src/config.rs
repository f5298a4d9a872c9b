use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use antispoof::dsp::VadConfig;
use antispoof::models::ModelSpec;
use antispoof::pipeline::{FeatureConfig, Schedule};

use crate::input_error;

/// Everything a run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub features: FeatureConfig,
    pub model: ModelSpec,
    /// Defaults to the preset for the model kind.
    pub schedule: Option<Schedule>,
    pub vad: VadConfig,
    pub scoring: ScoringConfig,
    pub crossval: CrossvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `<utt_id>.wav`.
    pub audio_root: PathBuf,
    pub train_protocol: Option<PathBuf>,
    pub dev_protocol: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub tdcf_params: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            audio_root: "audio".into(),
            train_protocol: None,
            dev_protocol: None,
            cache_dir: "cache".into(),
            output_dir: "run".into(),
            tdcf_params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// SincNet frame length; must match the model's chunk length.
    pub frame_ms: u32,
    pub shift_ms: u32,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { frame_ms: 200, shift_ms: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    pub k_hold: usize,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self { k_hold: 1 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| input_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule.clone().unwrap_or_else(|| Schedule::for_kind(self.model.kind))
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate().map_err(|e| input_error(e.to_string()))?;
        self.model.validate().map_err(|e| input_error(e.to_string()))?;
        self.schedule()
            .validate(self.model.kind)
            .map_err(|e| input_error(e.to_string()))?;
        if self.model.input_bins != self.features.spectrogram.bins_kept && self.model.kind.uses_features() {
            return Err(input_error(format!(
                "model expects {} bins but features have {}",
                self.model.input_bins, self.features.spectrogram.bins_kept
            )));
        }
        if self.model.sample_rate != self.features.sample_rate {
            return Err(input_error("model and feature sample rates differ"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serialising run config")
    }

    pub fn train_protocol(&self) -> Result<&Path> {
        self.paths
            .train_protocol
            .as_deref()
            .ok_or_else(|| input_error("paths.train_protocol is not set"))
    }

    pub fn dev_protocol(&self) -> Result<&Path> {
        self.paths
            .dev_protocol
            .as_deref()
            .ok_or_else(|| input_error("paths.dev_protocol is not set"))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.audio_root);
        fix(&mut self.cache_dir);
        fix(&mut self.output_dir);
        for p in [&mut self.train_protocol, &mut self.dev_protocol, &mut self.tdcf_params]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::Waveform;
use crate::dsp::{log_mvn, power_spectrogram, stack_channels, CqtConfig, CqtKernel, FeatureMap, SpectrogramConfig, LOG_FLOOR};
use crate::error::{Error, Result};

/// The two single-channel feature types. Two-channel model inputs stack
/// the spectrogram (channel 0) with the CQT (channel 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Spectrogram,
    Cqt,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Spectrogram, FeatureKind::Cqt];

    /// Kinds needed for a model with `channels` input channels.
    pub fn for_channels(channels: usize) -> Result<&'static [FeatureKind]> {
        match channels {
            1 => Ok(&Self::ALL[..1]),
            2 => Ok(&Self::ALL),
            n => Err(Error::config(format!("no feature layout for {n} input channels"))),
        }
    }

    /// Short name used in cache file names.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Spectrogram => "spec",
            FeatureKind::Cqt => "cqt",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spec" | "spectrogram" => Ok(FeatureKind::Spectrogram),
            "cqt" => Ok(FeatureKind::Cqt),
            other => Err(Error::config(format!("unknown feature kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub spectrogram: SpectrogramConfig,
    pub cqt: CqtConfig,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            spectrogram: SpectrogramConfig::default(),
            cqt: CqtConfig::default(),
            log_floor: LOG_FLOOR,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.spectrogram.validate()?;
        self.cqt.validate(self.sample_rate)?;
        if self.spectrogram.bins_kept != self.cqt.bins {
            return Err(Error::config(format!(
                "spectrogram keeps {} bins but the CQT has {}; stacked inputs need equal bins",
                self.spectrogram.bins_kept, self.cqt.bins
            )));
        }
        if self.spectrogram.hop != self.cqt.hop {
            return Err(Error::config("spectrogram and CQT hops differ"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::config("log_floor must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, in hex. Checkpoints and
    /// caches record it so mismatched features are refused.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Computes normalised log features; holds the precomputed CQT kernels.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    kernel: CqtKernel,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            kernel: CqtKernel::new(&cfg.cqt, cfg.sample_rate)?,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Log power, then per-bin MVN over time.
    pub fn extract(&self, w: &Waveform, kind: FeatureKind) -> Result<FeatureMap> {
        if w.sample_rate != self.cfg.sample_rate {
            return Err(Error::data(format!(
                "expected {} Hz audio, got {} Hz",
                self.cfg.sample_rate, w.sample_rate
            )));
        }
        let raw = match kind {
            FeatureKind::Spectrogram => power_spectrogram(w, &self.cfg.spectrogram)?,
            FeatureKind::Cqt => self.kernel.apply(w)?,
        };
        Ok(log_mvn(&raw, self.cfg.log_floor))
    }

    /// Model input for `channels` channels (1: spectrogram, 2: spectrogram
    /// and CQT).
    pub fn extract_input(&self, w: &Waveform, channels: usize) -> Result<FeatureMap> {
        let kinds = FeatureKind::for_channels(channels)?;
        let maps = kinds.iter().map(|&k| self.extract(w, k)).collect::<Result<Vec<_>>>()?;
        combine_channels(&maps)
    }
}

/// Stacks per-kind maps (in [`FeatureKind::ALL`] order) into one input.
pub fn combine_channels(maps: &[FeatureMap]) -> Result<FeatureMap> {
    match maps {
        [one] => Ok(one.clone()),
        [spec, cqt] => stack_channels(spec, cqt),
        _ => Err(Error::config(format!("cannot combine {} feature maps", maps.len()))),
    }
}

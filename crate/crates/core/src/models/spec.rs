use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vgg,
    Lcnn,
    Sincnet,
}

impl ModelKind {
    /// Whether the model consumes feature maps rather than raw audio.
    pub fn uses_features(self) -> bool {
        !matches!(self, ModelKind::Sincnet)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vgg" => Ok(ModelKind::Vgg),
            "lcnn" => Ok(ModelKind::Lcnn),
            "sincnet" => Ok(ModelKind::Sincnet),
            other => Err(Error::config(format!("unknown model kind '{other}'"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Vgg => "vgg",
            ModelKind::Lcnn => "lcnn",
            ModelKind::Sincnet => "sincnet",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutProfile {
    #[default]
    Standard,
    High,
}

impl DropoutProfile {
    pub fn rate(self) -> f64 {
        match self {
            DropoutProfile::Standard => 0.5,
            DropoutProfile::High => 0.7,
        }
    }
}

/// Architecture choice and its size knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// 1 (spectrogram or CQT) or 2 (both stacked); SincNet takes 1.
    pub input_channels: usize,
    /// Scales channel counts and dense widths; the sinc layer is never scaled.
    pub width_multiplier: f64,
    pub dropout_profile: DropoutProfile,
    /// Frequency bins of the CNN input.
    pub input_bins: usize,
    /// Waveform chunk length for SincNet.
    pub chunk_samples: usize,
    pub sample_rate: u32,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Vgg,
            input_channels: 2,
            width_multiplier: 1.0,
            dropout_profile: DropoutProfile::Standard,
            input_bins: 256,
            chunk_samples: 3200,
            sample_rate: 16000,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            input_channels: if kind == ModelKind::Sincnet { 1 } else { 2 },
            ..Self::default()
        }
    }

    pub fn with_width(mut self, m: f64) -> Self {
        self.width_multiplier = m;
        self
    }

    pub fn with_channels(mut self, c: usize) -> Self {
        self.input_channels = c;
        self
    }

    /// Scaled width, rounded to an even count of at least 2.
    pub fn width(&self, full: usize) -> usize {
        let w = (full as f64 * self.width_multiplier / 2.0).round() as usize * 2;
        w.max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::config(format!(
                "width_multiplier must lie in (0, 1], got {}",
                self.width_multiplier
            )));
        }
        match self.kind {
            ModelKind::Vgg | ModelKind::Lcnn => {
                if !matches!(self.input_channels, 1 | 2) {
                    return Err(Error::config(format!(
                        "input_channels must be 1 or 2, got {}",
                        self.input_channels
                    )));
                }
                if self.input_bins == 0 || self.input_bins % 64 != 0 {
                    return Err(Error::config(format!(
                        "input_bins must be a positive multiple of 64 (six 2x frequency pools), got {}",
                        self.input_bins
                    )));
                }
            }
            ModelKind::Sincnet => {
                if self.input_channels != 1 {
                    return Err(Error::config("sincnet takes a single waveform channel"));
                }
                if self.sample_rate < 200 {
                    return Err(Error::config(format!("sample rate {} too low", self.sample_rate)));
                }
                if sincnet_steps(self.chunk_samples).is_none() {
                    return Err(Error::config(format!(
                        "chunk of {} samples is too short for the sincnet front end",
                        self.chunk_samples
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::config(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Time steps left after the SincNet front end (251-tap sinc, then
/// pool 3, conv 5, pool 3, conv 5, pool 3), or `None` if the chunk is too
/// short.
pub(crate) fn sincnet_steps(chunk: usize) -> Option<usize> {
    let valid = |t: usize, k: usize| (t >= k).then(|| t - k + 1);
    let t = valid(chunk, 251)? / 3;
    let t = valid(t, 5)? / 3;
    let t = valid(t, 5)? / 3;
    (t > 0).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_stay_even() {
        let s = ModelSpec::new(ModelKind::Lcnn).with_width(0.125);
        assert_eq!(s.width(32), 4);
        assert_eq!(s.width(60), 8);
        assert_eq!(s.width(2048), 256);
        assert_eq!(ModelSpec::new(ModelKind::Vgg).with_width(0.01).width(32), 2);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::new(ModelKind::Vgg).validate().is_ok());
        assert!(ModelSpec::new(ModelKind::Vgg).with_width(0.0).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Vgg).with_width(1.5).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Vgg).with_channels(3).validate().is_err());
        let mut s = ModelSpec::new(ModelKind::Vgg);
        s.input_bins = 100;
        assert!(s.validate().is_err());
        assert!(ModelSpec::new(ModelKind::Sincnet).with_channels(2).validate().is_err());
    }

    #[test]
    fn sincnet_front_end_length() {
        assert_eq!(sincnet_steps(3200), Some(107));
        assert_eq!(sincnet_steps(250), None);
        assert_eq!(sincnet_steps(300), None);
    }

    #[test]
    fn toml_round_trip() {
        let s = ModelSpec {
            dropout_profile: DropoutProfile::High,
            ..ModelSpec::new(ModelKind::Sincnet).with_width(0.25)
        };
        let back = ModelSpec::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_toml().contains("kind = \"sincnet\""));
    }
}

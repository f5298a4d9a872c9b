//! Feature extraction and waveform preprocessing.

mod cqt;
mod feature;
mod normalize;
mod spectrogram;
mod vad;
mod window;

pub use cqt::{cqt, CqtConfig, CqtKernel};
pub use feature::FeatureMap;
pub use normalize::{log_mvn, stack_channels, waveform_mvn, LOG_FLOOR, STD_FLOOR};
pub use spectrogram::{power_spectrogram, SpectrogramConfig};
pub use vad::{energy_vad, VadConfig};
pub use window::Window;

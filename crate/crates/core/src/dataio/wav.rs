use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio with samples in [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::data("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Load a RIFF/WAVE file holding mono 16-bit PCM.
pub fn load_waveform(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(e).at(path))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(format!(
            "expected mono audio, found {} channels",
            spec.channels
        ))
        .at(path));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(format!(
            "expected 16-bit PCM, found {:?} with {} bits",
            spec.sample_format, spec.bits_per_sample
        ))
        .at(path));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(e).at(path))?;
    if samples.is_empty() {
        return Err(Error::data("audio file holds no samples").at(path));
    }
    Waveform::new(samples, spec.sample_rate).map_err(|e| e.at(path))
}

/// Write mono 16-bit PCM, clipping to the representable range.
pub fn write_waveform(w: &Waveform, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(e).at(path))?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| wav_error(e).at(path))?;
    }
    writer.finalize().map_err(|e| wav_error(e).at(path))
}

fn wav_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::format(other.to_string()),
    }
}

use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureMap, Window};
use crate::dataio::Waveform;
use crate::error::{Error, Result};

/// Short-time power spectrum analysis parameters (samples).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrogramConfig {
    pub fft_size: usize,
    pub win_length: usize,
    pub hop: usize,
    pub window: Window,
    pub bins_kept: usize,
}

impl Default for SpectrogramConfig {
    /// 25 ms Hamming window, 10 ms hop and a 512-point FFT at 16 kHz; the
    /// Nyquist bin is dropped to leave 256 rows.
    fn default() -> Self {
        Self {
            fft_size: 512,
            win_length: 400,
            hop: 160,
            window: Window::Hamming,
            bins_kept: 256,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 {
            return Err(Error::config("spectrogram hop must be positive"));
        }
        if self.win_length == 0 || self.win_length > self.fft_size {
            return Err(Error::config(format!(
                "window length {} must be in 1..={}",
                self.win_length, self.fft_size
            )));
        }
        if self.bins_kept == 0 || self.bins_kept > self.fft_size / 2 + 1 {
            return Err(Error::config(format!(
                "cannot keep {} bins of a {}-point FFT",
                self.bins_kept, self.fft_size
            )));
        }
        Ok(())
    }

    /// Frames produced for `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win_length {
            0
        } else {
            1 + (len - self.win_length) / self.hop
        }
    }
}

/// Squared magnitude of the windowed DFT for each frame, keeping the
/// lowest `bins_kept` bins. Frames start at multiples of `hop` and are
/// zero-padded to `fft_size`.
pub fn power_spectrogram(w: &Waveform, cfg: &SpectrogramConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    if w.len() < cfg.win_length {
        return Err(Error::data(format!(
            "waveform has {} samples; the spectrogram needs at least {}",
            w.len(),
            cfg.win_length
        )));
    }
    let frames = cfg.frame_count(w.len());
    let window = cfg.window.coefficients(cfg.win_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = FeatureMap::zeros(cfg.bins_kept, frames, 1);

    for t in 0..frames {
        let start = t * cfg.hop;
        let segment = &w.samples[start..start + cfg.win_length];
        for (dst, (&x, &g)) in buf.iter_mut().zip(segment.iter().zip(&window)) {
            *dst = Complex::new(x * g, 0.0);
        }
        for dst in &mut buf[cfg.win_length..] {
            *dst = Complex::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, c) in out.frame_mut(t, 0).iter_mut().zip(&buf) {
            *dst = c.norm_sqr();
        }
    }
    Ok(out)
}

use std::f64::consts::PI;

use super::{FeatureMap, Window};
use crate::dataio::Waveform;
use crate::error::{Error, Result};

/// Constant-Q analysis parameters.
///
/// The defaults span 8 octaves from 31.25 Hz at 32 bins per octave, giving
/// 256 bins whose top edge sits exactly at the 8 kHz Nyquist limit of
/// 16 kHz audio, on the same 10 ms hop as the spectrogram.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqtConfig {
    pub f_min: f64,
    pub bins: usize,
    pub bins_per_octave: usize,
    pub hop: usize,
    pub q_scale: f64,
}

impl Default for CqtConfig {
    fn default() -> Self {
        Self {
            f_min: 31.25,
            bins: 256,
            bins_per_octave: 32,
            hop: 160,
            q_scale: 1.0,
        }
    }
}

impl CqtConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.f_min > 0.0) || self.bins == 0 || self.bins_per_octave == 0 || self.hop == 0 {
            return Err(Error::config(
                "CQT needs positive f_min, bins, bins_per_octave and hop",
            ));
        }
        if !(self.q_scale > 0.0) {
            return Err(Error::config("CQT q_scale must be positive"));
        }
        let f_max = self.f_min * 2f64.powf(self.bins as f64 / self.bins_per_octave as f64);
        let nyquist = sample_rate as f64 / 2.0;
        if f_max > nyquist + 1e-9 {
            return Err(Error::config(format!(
                "CQT top frequency {f_max:.1} Hz exceeds Nyquist {nyquist} Hz"
            )));
        }
        Ok(())
    }

    pub fn center_frequency(&self, bin: usize) -> f64 {
        self.f_min * 2f64.powf(bin as f64 / self.bins_per_octave as f64)
    }

    pub fn q(&self) -> f64 {
        self.q_scale / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    /// Kernel length of `bin` in samples.
    pub fn kernel_length(&self, bin: usize, sample_rate: u32) -> usize {
        ((self.q() * sample_rate as f64 / self.center_frequency(bin)).round() as usize).max(1)
    }

    /// Frames for `len` samples: one per hop, centred at `t * hop`.
    pub fn frame_count(&self, len: usize) -> usize {
        if len == 0 {
            0
        } else {
            1 + (len - 1) / self.hop
        }
    }
}

struct BinKernel {
    // Offset of kernel tap 0 relative to the frame centre.
    start: isize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Precomputed complex constant-Q kernels for one sample rate.
///
/// Tap `n` of bin `k` is `hann(n) / N_k * exp(-i 2 pi f_k (n - N_k/2) / sr)`;
/// samples that fall outside the signal contribute zero.
pub struct CqtKernel {
    cfg: CqtConfig,
    sample_rate: u32,
    bins: Vec<BinKernel>,
}

impl CqtKernel {
    pub fn new(cfg: &CqtConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let sr = sample_rate as f64;
        let bins = (0..cfg.bins)
            .map(|k| {
                let len = cfg.kernel_length(k, sample_rate);
                let half = (len / 2) as isize;
                let fk = cfg.center_frequency(k);
                let window = Window::Hann.coefficients(len);
                let (mut re, mut im) = (Vec::with_capacity(len), Vec::with_capacity(len));
                for (n, &g) in window.iter().enumerate() {
                    let phase = -2.0 * PI * fk * (n as isize - half) as f64 / sr;
                    let amp = g / len as f64;
                    re.push(amp * phase.cos());
                    im.push(amp * phase.sin());
                }
                BinKernel {
                    start: -half,
                    re,
                    im,
                }
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            bins,
        })
    }

    pub fn config(&self) -> &CqtConfig {
        &self.cfg
    }

    pub fn apply(&self, w: &Waveform) -> Result<FeatureMap> {
        if w.sample_rate != self.sample_rate {
            return Err(Error::data(format!(
                "kernel built for {} Hz, waveform is {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        let frames = self.cfg.frame_count(w.len());
        let mut out = FeatureMap::zeros(self.cfg.bins, frames, 1);
        let x = &w.samples;
        let len = x.len() as isize;
        for t in 0..frames {
            let centre = (t * self.cfg.hop) as isize;
            let row = out.frame_mut(t, 0);
            for (dst, k) in row.iter_mut().zip(&self.bins) {
                let first = centre + k.start;
                let taps = k.re.len() as isize;
                let lo = (-first).max(0);
                let hi = (len - first).min(taps);
                if lo >= hi {
                    continue;
                }
                let xs = &x[(first + lo) as usize..(first + hi) as usize];
                let re = dot(xs, &k.re[lo as usize..hi as usize]);
                let im = dot(xs, &k.im[lo as usize..hi as usize]);
                *dst = re * re + im * im;
            }
        }
        Ok(out)
    }
}

/// Constant-Q power: squared magnitude of each frame's inner product with
/// each bin's kernel.
pub fn cqt(w: &Waveform, cfg: &CqtConfig) -> Result<FeatureMap> {
    CqtKernel::new(cfg, w.sample_rate)?.apply(w)
}

// Eight independent partial sums so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

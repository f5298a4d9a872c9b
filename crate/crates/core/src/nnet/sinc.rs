use std::f64::consts::PI;

use rayon::prelude::*;

use super::layer::{check_grad_shape, fingerprint, missing_cache};
use super::linalg::{gemm, Mat};
use super::{Ctx, Layer, Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Realised cutoffs are kept this far inside the open interval (0, 0.5).
const EDGE: f64 = 1e-6;

/// Band edges in cycles per sample, one entry per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SincCutoffs {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl SincCutoffs {
    /// `bands` adjacent bands whose `bands + 1` edges are evenly spaced on
    /// the mel scale between `f_min_hz` and `f_max_hz`.
    pub fn mel(bands: usize, f_min_hz: f64, f_max_hz: f64, sample_rate: u32) -> Result<Self> {
        let sr = sample_rate as f64;
        if bands == 0 || !(0.0 < f_min_hz && f_min_hz < f_max_hz && f_max_hz <= sr / 2.0) {
            return Err(Error::config(format!(
                "mel band edges need 0 < {f_min_hz} < {f_max_hz} <= {}",
                sr / 2.0
            )));
        }
        let (lo, hi) = (hz_to_mel(f_min_hz), hz_to_mel(f_max_hz));
        let edges: Vec<f64> = (0..=bands)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / bands as f64) / sr)
            .collect();
        Ok(Self {
            low: edges[..bands].to_vec(),
            high: edges[1..].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }
}

/// Realised band for raw parameters `(p1, p2)` with the derivative flags
/// needed by the backward pass.
#[derive(Debug, Clone, Copy)]
struct Band {
    f1: f64,
    f2: f64,
    // d f1 / d p1
    a1: f64,
    // sign of p2 - p1
    s: f64,
    high_clamped: bool,
}

impl Band {
    fn new(p1: f64, p2: f64) -> Self {
        let hi = 0.5 - EDGE;
        let m = p1.abs();
        let (f1, a1) = if m < EDGE {
            (EDGE, 0.0)
        } else if m > hi {
            (hi, 0.0)
        } else {
            (m, if p1 < 0.0 { -1.0 } else { 1.0 })
        };
        let d = p2 - p1;
        let s = if d < 0.0 { -1.0 } else { 1.0 };
        let raw = f1 + d.abs();
        let high_clamped = raw > hi;
        Band {
            f1,
            f2: if high_clamped { hi } else { raw },
            a1,
            s,
            high_clamped,
        }
    }

    fn code(&self) -> u64 {
        (self.a1 + 1.0) as u64 | ((self.s > 0.0) as u64) << 2 | (self.high_clamped as u64) << 3
    }
}

/// First-layer band-pass filter bank with two learnable cutoffs per filter.
///
/// Input is a batch of waveforms `[batch, samples]`; output is
/// `[batch, filters, samples - length + 1]` (valid correlation).
pub struct SincConv<T> {
    length: usize,
    window: Vec<f64>,
    cutoffs: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> SincConv<T> {
    pub fn new(name: &str, init: &SincCutoffs, length: usize) -> Result<Self> {
        if length % 2 == 0 || init.is_empty() || init.low.len() != init.high.len() {
            return Err(Error::config(format!(
                "{name}: sinc filters need an odd length and matching cutoff lists"
            )));
        }
        let raw: Vec<f64> = init.low.iter().zip(&init.high).flat_map(|(&l, &h)| [l, h]).collect();
        let window = (0..length)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (length - 1) as f64).cos())
            .collect();
        Ok(Self {
            length,
            window,
            cutoffs: Param::new(format!("{name}.cutoffs"), Tensor::from_f64(vec![init.len(), 2], &raw)?),
            cache: None,
        })
    }

    pub fn filters(&self) -> usize {
        self.cutoffs.value.shape()[0]
    }

    pub fn length(&self) -> usize {
        self.length
    }

    fn bands(&self) -> Vec<Band> {
        self.cutoffs
            .value
            .data()
            .chunks(2)
            .map(|p| Band::new(p[0].as_f64(), p[1].as_f64()))
            .collect()
    }

    /// Effective cutoffs after the reparametrisation.
    pub fn realized(&self) -> SincCutoffs {
        let bands = self.bands();
        SincCutoffs {
            low: bands.iter().map(|b| b.f1).collect(),
            high: bands.iter().map(|b| b.f2).collect(),
        }
    }

    /// Windowed impulse responses, `[filters, length]` row-major.
    pub fn impulse_responses(&self) -> Vec<f64> {
        let half = (self.length / 2) as f64;
        let mut g = Vec::with_capacity(self.filters() * self.length);
        for b in self.bands() {
            for (i, w) in self.window.iter().enumerate() {
                let n = i as f64 - half;
                let v = if n == 0.0 {
                    2.0 * (b.f2 - b.f1)
                } else {
                    ((2.0 * PI * b.f2 * n).sin() - (2.0 * PI * b.f1 * n).sin()) / (PI * n)
                };
                g.push(v * w);
            }
        }
        g
    }

    fn out_len(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        if shape.len() != 2 {
            return Err(Error::shape(format!("sinc conv expects [batch, samples], got {shape:?}")));
        }
        if shape[1] < self.length {
            return Err(Error::shape(format!(
                "sinc conv needs at least {} samples, got {}",
                self.length, shape[1]
            )));
        }
        Ok((shape[0], shape[1], shape[1] - self.length + 1))
    }

    /// Correlates every row of `samples` with the current filters; the
    /// result for each example is `[filters, samples - length + 1]`.
    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, n, out) = self.out_len(x.shape())?;
        let k = self.filters();
        let g: Vec<T> = self.impulse_responses().into_iter().map(T::lit).collect();
        let mut y = Tensor::zeros(&[b, k, out]);
        y.data_mut()
            .par_chunks_mut(k * out)
            .zip(x.data().par_chunks(n))
            .for_each(|(yb, xb)| {
                let toeplitz = Mat::strided(xb, self.length, out, 1, 1);
                gemm(T::one(), Mat::new(&g, k, self.length), toeplitz, T::zero(), yb);
            });
        Ok(y)
    }
}

impl<T: Scalar> Layer<T> for SincConv<T> {
    fn kind(&self) -> &'static str {
        "sinc_conv"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (b, _, out) = self.out_len(input)?;
        Ok(vec![b, self.filters(), out])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.run(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("sinc_conv"))?;
        let (b, n, out) = self.out_len(x.shape())?;
        let k = self.filters();
        let len = self.length;
        check_grad_shape(grad, &[b, k, out], "sinc_conv")?;

        let mut dg = vec![T::zero(); k * len];
        for e in 0..b {
            let toeplitz = Mat::strided(&x.data()[e * n..(e + 1) * n], len, out, 1, 1);
            let dy = Mat::new(&grad.data()[e * k * out..(e + 1) * k * out], k, out);
            gemm(T::one(), dy, toeplitz.t(), T::one(), &mut dg);
        }

        let dx = need_input_grad.then(|| {
            let g: Vec<T> = self.impulse_responses().into_iter().map(T::lit).collect();
            let mut dx = Tensor::zeros(x.shape());
            let mut cols = vec![T::zero(); len * out];
            for e in 0..b {
                let dy = Mat::new(&grad.data()[e * k * out..(e + 1) * k * out], k, out);
                gemm(T::one(), Mat::new(&g, k, len).t(), dy, T::zero(), &mut cols);
                let dxb = &mut dx.data_mut()[e * n..(e + 1) * n];
                for (j, row) in cols.chunks(out).enumerate() {
                    for (d, &v) in dxb[j..j + out].iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
            dx
        });

        let half = (len / 2) as f64;
        let bands = self.bands();
        let dp = self.cutoffs.grad_mut();
        for (f, band) in bands.iter().enumerate() {
            let (mut d1, mut d2) = (0.0, 0.0);
            for (i, w) in self.window.iter().enumerate() {
                let nn = i as f64 - half;
                let gv = dg[f * len + i].as_f64() * 2.0 * w;
                d2 += gv * (2.0 * PI * band.f2 * nn).cos();
                d1 -= gv * (2.0 * PI * band.f1 * nn).cos();
            }
            let open = if band.high_clamped { 0.0 } else { 1.0 };
            dp[2 * f] += T::lit(d1 * band.a1 + d2 * open * (band.a1 - band.s));
            dp[2 * f + 1] += T::lit(d2 * open * band.s);
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.cutoffs]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.cutoffs]
    }

    fn decisions(&self) -> u64 {
        fingerprint(self.bands().iter().map(Band::code))
    }
}

#[cfg(test)]
mod tests {
    use rustfft::{num_complex::Complex, FftPlanner};

    use super::*;

    fn single(f1: f64, f2: f64) -> SincConv<f64> {
        let c = SincCutoffs {
            low: vec![f1],
            high: vec![f2],
        };
        SincConv::new("s", &c, 251).unwrap()
    }

    #[test]
    fn equal_cutoffs_give_a_silent_filter() {
        let s = single(0.1, 0.1);
        let x = Tensor::from_f64(vec![1, 300], &(0..300).map(|i| (i as f64 * 0.3).sin()).collect::<Vec<_>>())
            .unwrap();
        let y = s.infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 50]);
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn magnitude_response_is_band_pass() {
        let (f1, f2) = (0.05, 0.15);
        let g = single(f1, f2).impulse_responses();
        let nfft = 4096;
        let mut buf: Vec<Complex<f64>> = g.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(nfft, Complex::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
        let mag: Vec<f64> = buf[..=nfft / 2].iter().map(|c| c.norm()).collect();
        let (peak_bin, peak) = mag
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        let peak_f = peak_bin as f64 / nfft as f64;
        assert!((f1..=f2).contains(&peak_f), "peak at {peak_f}");
        let at = (2.0 * f2 * nfft as f64).round() as usize;
        assert!(mag[at] < 0.05 * peak);
    }

    #[test]
    fn eighty_filters_have_160_parameters() {
        let c = SincCutoffs::mel(80, 30.0, 7970.0, 16000).unwrap();
        let s = SincConv::<f32>::new("s", &c, 251).unwrap();
        assert_eq!(s.params()[0].numel(), 160);
        assert!(SincConv::<f32>::new("s", &c, 250).is_err());
    }

    #[test]
    fn mel_bands_tile_the_range() {
        let c = SincCutoffs::mel(80, 30.0, 8000.0, 16000).unwrap();
        assert_eq!(c.len(), 80);
        assert!((c.low[0] - 30.0 / 16000.0).abs() < 1e-12);
        assert!((c.high[79] - 0.5).abs() < 1e-12);
        for i in 1..80 {
            assert_eq!(c.low[i], c.high[i - 1]);
            assert!(c.high[i] - c.low[i] > c.high[i - 1] - c.low[i - 1]);
        }
    }

    #[test]
    fn short_input_is_a_shape_error() {
        let s = single(0.1, 0.2);
        assert!(s.infer(&Tensor::zeros(&[1, 250])).is_err());
    }

    #[test]
    fn matches_direct_correlation() {
        let s = single(0.02, 0.3);
        let xs: Vec<f64> = (0..260).map(|i| ((i * 37 % 23) as f64) - 11.0).collect();
        let y = s.infer(&Tensor::from_f64(vec![1, 260], &xs).unwrap()).unwrap();
        let g = s.impulse_responses();
        for t in 0..10 {
            let want: f64 = (0..251).map(|j| g[j] * xs[t + j]).sum();
            assert!((y.data()[t] - want).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn realized_cutoffs_stay_valid(p1 in -2.0f64..2.0, p2 in -2.0f64..2.0) {
            let b = Band::new(p1, p2);
            proptest::prop_assert!(0.0 < b.f1 && b.f1 <= b.f2 && b.f2 < 0.5);
        }
    }
}

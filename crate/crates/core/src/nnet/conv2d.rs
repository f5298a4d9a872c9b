use rand::Rng as _;
use rayon::prelude::*;

use super::layer::{check_grad_shape, missing_cache};
use super::linalg::{gemm, Mat};
use super::{Ctx, Layer, Param, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::Rng;

/// Examples per partial weight-gradient sum; fixed so the reduction order
/// does not depend on the thread count.
const GRAD_GROUP: usize = 4;

/// 2-D convolution over `[batch, freq, time, channel]` with `same` padding
/// and stride 1. Weights are `[kh, kw, cin, cout]`.
pub struct Conv2d<T> {
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    weight: Param<T>,
    bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-uniform initialised convolution.
    pub fn new(name: &str, kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut Rng) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::config(format!(
                "{name}: same padding needs odd kernels, got {kh}x{kw}"
            )));
        }
        if cin == 0 || cout == 0 {
            return Err(Error::config(format!("{name}: channel counts must be positive")));
        }
        let fan_in = (kh * kw * cin) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let w: Vec<T> = (0..kh * kw * cin * cout)
            .map(|_| T::lit(rng.gen_range(-limit..limit)))
            .collect();
        Ok(Self {
            kh,
            kw,
            cin,
            cout,
            weight: Param::new(format!("{name}.weight"), Tensor::new(vec![kh, kw, cin, cout], w)?),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            cache: None,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn dims(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d expects [batch, freq, time, channel], got {shape:?}"
            )));
        }
        if shape[3] != self.cin {
            return Err(Error::shape(format!(
                "conv2d expects {} input channels, got {}",
                self.cin, shape[3]
            )));
        }
        if shape[0] == 0 || shape[1] == 0 || shape[2] == 0 {
            return Err(Error::shape(format!("conv2d got an empty input {shape:?}")));
        }
        Ok((shape[0], shape[1], shape[2]))
    }

    /// Gather `[f*t, kh*kw*cin]` patches of one example.
    fn im2col(&self, x: &[T], f: usize, t: usize, cols: &mut [T]) {
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let cin = self.cin;
        let plen = self.patch_len();
        for fi in 0..f {
            for ti in 0..t {
                let row = &mut cols[(fi * t + ti) * plen..(fi * t + ti + 1) * plen];
                for i in 0..self.kh {
                    let sf = fi as isize + i as isize - ph;
                    for j in 0..self.kw {
                        let st = ti as isize + j as isize - pw;
                        let dst = &mut row[(i * self.kw + j) * cin..(i * self.kw + j + 1) * cin];
                        if sf < 0 || sf >= f as isize || st < 0 || st >= t as isize {
                            dst.iter_mut().for_each(|v| *v = T::zero());
                        } else {
                            let src = (sf as usize * t + st as usize) * cin;
                            dst.copy_from_slice(&x[src..src + cin]);
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add patch gradients back onto one example.
    fn col2im(&self, cols: &[T], f: usize, t: usize, dx: &mut [T]) {
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let cin = self.cin;
        let plen = self.patch_len();
        dx.iter_mut().for_each(|v| *v = T::zero());
        for fi in 0..f {
            for ti in 0..t {
                let row = &cols[(fi * t + ti) * plen..(fi * t + ti + 1) * plen];
                for i in 0..self.kh {
                    let sf = fi as isize + i as isize - ph;
                    if sf < 0 || sf >= f as isize {
                        continue;
                    }
                    for j in 0..self.kw {
                        let st = ti as isize + j as isize - pw;
                        if st < 0 || st >= t as isize {
                            continue;
                        }
                        let src = &row[(i * self.kw + j) * cin..(i * self.kw + j + 1) * cin];
                        let dst = (sf as usize * t + st as usize) * cin;
                        for (d, &s) in dx[dst..dst + cin].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    fn forward_example(&self, x: &[T], f: usize, t: usize, y: &mut [T]) {
        let plen = self.patch_len();
        let rows = f * t;
        let w = Mat::new(self.weight.value.data(), plen, self.cout);
        for r in 0..rows {
            y[r * self.cout..(r + 1) * self.cout].copy_from_slice(self.bias.value.data());
        }
        if self.pointwise() {
            gemm(T::one(), Mat::new(x, rows, plen), w, T::one(), y);
        } else {
            let mut cols = vec![T::zero(); rows * plen];
            self.im2col(x, f, t, &mut cols);
            gemm(T::one(), Mat::new(&cols, rows, plen), w, T::one(), y);
        }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (b, f, t) = self.dims(input)?;
        Ok(vec![b, f, t, self.cout])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, f, t) = self.dims(x.shape())?;
        let mut y = Tensor::zeros(&[b, f, t, self.cout]);
        let in_len = f * t * self.cin;
        let out_len = f * t * self.cout;
        if out_len > 0 {
            y.data_mut()
                .par_chunks_mut(out_len)
                .zip(x.data().par_chunks(in_len))
                .for_each(|(yb, xb)| self.forward_example(xb, f, t, yb));
        }
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("conv2d"))?;
        let (b, f, t) = self.dims(x.shape())?;
        check_grad_shape(grad, &[b, f, t, self.cout], "conv2d")?;
        let plen = self.patch_len();
        let rows = f * t;
        let in_len = rows * self.cin;
        let out_len = rows * self.cout;
        let wlen = plen * self.cout;
        let this = &*self;
        let w = Mat::new(this.weight.value.data(), plen, this.cout);

        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let groups: Vec<usize> = (0..b.div_ceil(GRAD_GROUP)).collect();
        let dx_chunks: Vec<Option<&mut [T]>> = match dx.as_mut() {
            Some(d) => d
                .data_mut()
                .chunks_mut(in_len * GRAD_GROUP)
                .map(Some)
                .collect(),
            None => groups.iter().map(|_| None).collect(),
        };
        let partials: Vec<(Vec<T>, Vec<T>)> = groups
            .into_par_iter()
            .zip(dx_chunks)
            .map(|(g, mut dxg)| {
                let mut dw = vec![T::zero(); wlen];
                let mut db = vec![T::zero(); this.cout];
                let mut cols = if this.pointwise() { Vec::new() } else { vec![T::zero(); rows * plen] };
                let mut dcols = vec![T::zero(); rows * plen];
                let end = ((g + 1) * GRAD_GROUP).min(b);
                for (k, e) in (g * GRAD_GROUP..end).enumerate() {
                    let xb = &x.data()[e * in_len..(e + 1) * in_len];
                    let gb = &grad.data()[e * out_len..(e + 1) * out_len];
                    let dy = Mat::new(gb, rows, this.cout);
                    let patches = if this.pointwise() {
                        Mat::new(xb, rows, plen)
                    } else {
                        this.im2col(xb, f, t, &mut cols);
                        Mat::new(&cols, rows, plen)
                    };
                    gemm(T::one(), patches.t(), dy, T::one(), &mut dw);
                    for r in 0..rows {
                        for (d, &v) in db.iter_mut().zip(&gb[r * this.cout..(r + 1) * this.cout]) {
                            *d += v;
                        }
                    }
                    if let Some(dxg) = dxg.as_deref_mut() {
                        let dxb = &mut dxg[k * in_len..(k + 1) * in_len];
                        if this.pointwise() {
                            gemm(T::one(), dy, w.t(), T::zero(), dxb);
                        } else {
                            gemm(T::one(), dy, w.t(), T::zero(), &mut dcols);
                            this.col2im(&dcols, f, t, dxb);
                        }
                    }
                }
                (dw, db)
            })
            .collect();

        let gw = self.weight.grad_mut();
        for (dw, _) in &partials {
            for (g, &v) in gw.iter_mut().zip(dw) {
                *g += v;
            }
        }
        let gb = self.bias.grad_mut();
        for (_, db) in &partials {
            for (g, &v) in gb.iter_mut().zip(db) {
                *g += v;
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

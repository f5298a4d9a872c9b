use rand::Rng as _;
use rayon::prelude::*;

use super::layer::{check_grad_shape, missing_cache};
use super::linalg::{gemm, Mat};
use super::{Ctx, Layer, Param, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::Rng;

/// 1-D valid convolution over `[batch, channel, time]`. Weights are
/// `[cout, cin, kernel]`.
pub struct Conv1d<T> {
    cin: usize,
    cout: usize,
    kernel: usize,
    weight: Param<T>,
    bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut Rng) -> Result<Self> {
        if cin == 0 || cout == 0 || kernel == 0 {
            return Err(Error::config(format!("{name}: conv1d sizes must be positive")));
        }
        let limit = (6.0 / (cin * kernel) as f64).sqrt();
        let w = (0..cout * cin * kernel)
            .map(|_| T::lit(rng.gen_range(-limit..limit)))
            .collect();
        Ok(Self {
            cin,
            cout,
            kernel,
            weight: Param::new(format!("{name}.weight"), Tensor::new(vec![cout, cin, kernel], w)?),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            cache: None,
        })
    }

    fn dims(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        if shape.len() != 3 || shape[1] != self.cin {
            return Err(Error::shape(format!(
                "conv1d expects [batch, {}, time], got {shape:?}",
                self.cin
            )));
        }
        if shape[2] < self.kernel {
            return Err(Error::shape(format!(
                "conv1d kernel {} is longer than the input ({})",
                self.kernel, shape[2]
            )));
        }
        Ok((shape[0], shape[2], shape[2] - self.kernel + 1))
    }

    /// `[cin * kernel, out]` patch matrix of one example.
    fn im2col(&self, x: &[T], t: usize, out: usize, cols: &mut [T]) {
        for c in 0..self.cin {
            for j in 0..self.kernel {
                let row = (c * self.kernel + j) * out;
                cols[row..row + out].copy_from_slice(&x[c * t + j..c * t + j + out]);
            }
        }
    }

    fn wmat(&self) -> Mat<'_, T> {
        Mat::new(self.weight.value.data(), self.cout, self.cin * self.kernel)
    }
}

impl<T: Scalar> Layer<T> for Conv1d<T> {
    fn kind(&self) -> &'static str {
        "conv1d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (b, _, out) = self.dims(input)?;
        Ok(vec![b, self.cout, out])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, t, out) = self.dims(x.shape())?;
        let mut y = Tensor::zeros(&[b, self.cout, out]);
        let plen = self.cin * self.kernel;
        y.data_mut()
            .par_chunks_mut(self.cout * out)
            .zip(x.data().par_chunks(self.cin * t))
            .for_each(|(yb, xb)| {
                let mut cols = vec![T::zero(); plen * out];
                self.im2col(xb, t, out, &mut cols);
                for (row, &bias) in yb.chunks_mut(out).zip(self.bias.value.data()) {
                    row.iter_mut().for_each(|v| *v = bias);
                }
                gemm(T::one(), self.wmat(), Mat::new(&cols, plen, out), T::one(), yb);
            });
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("conv1d"))?;
        let (b, t, out) = self.dims(x.shape())?;
        check_grad_shape(grad, &[b, self.cout, out], "conv1d")?;
        let plen = self.cin * self.kernel;
        let mut dw = vec![T::zero(); self.cout * plen];
        let mut db = vec![T::zero(); self.cout];
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let mut cols = vec![T::zero(); plen * out];
        let mut dcols = vec![T::zero(); plen * out];
        for e in 0..b {
            let xb = &x.data()[e * self.cin * t..(e + 1) * self.cin * t];
            let gb = &grad.data()[e * self.cout * out..(e + 1) * self.cout * out];
            self.im2col(xb, t, out, &mut cols);
            let dy = Mat::new(gb, self.cout, out);
            gemm(T::one(), dy, Mat::new(&cols, plen, out).t(), T::one(), &mut dw);
            for (d, row) in db.iter_mut().zip(gb.chunks(out)) {
                *d += row.iter().copied().sum();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(T::one(), self.wmat().t(), dy, T::zero(), &mut dcols);
                let dxb = &mut dx.data_mut()[e * self.cin * t..(e + 1) * self.cin * t];
                for c in 0..self.cin {
                    for j in 0..self.kernel {
                        let row = &dcols[(c * self.kernel + j) * out..][..out];
                        for (d, &v) in dxb[c * t + j..c * t + j + out].iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
        }
        for (g, v) in self.weight.grad_mut().iter_mut().zip(dw) {
            *g += v;
        }
        for (g, v) in self.bias.grad_mut().iter_mut().zip(db) {
            *g += v;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_convolution() {
        let mut rng = crate::rng_from_seed(3);
        let conv = Conv1d::<f64>::new("c", 2, 3, 5, &mut rng).unwrap();
        let xs: Vec<f64> = (0..2 * 2 * 9).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let y = conv.infer(&Tensor::from_f64(vec![2, 2, 9], &xs).unwrap()).unwrap();
        assert_eq!(y.shape(), &[2, 3, 5]);
        let w = conv.weight.value.data();
        for e in 0..2 {
            for o in 0..3 {
                for s in 0..5 {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for j in 0..5 {
                            acc += w[(o * 2 + c) * 5 + j] * xs[(e * 2 + c) * 9 + s + j];
                        }
                    }
                    assert!((y.data()[(e * 3 + o) * 5 + s] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sincnet_conv_sizes() {
        let mut rng = crate::rng_from_seed(3);
        let conv = Conv1d::<f32>::new("c", 80, 60, 5, &mut rng).unwrap();
        assert_eq!(conv.output_shape(&[4, 80, 983]).unwrap(), vec![4, 60, 979]);
        assert!(conv.output_shape(&[4, 60, 983]).is_err());
        assert!(conv.output_shape(&[4, 80, 4]).is_err());
    }
}

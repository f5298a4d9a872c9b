use super::layer::{check_grad_shape, fingerprint, missing_cache};
use super::{Ctx, Layer, Scalar, Tensor};
use crate::error::{Error, Result};

/// What a pooling layer does with a time length that is not a multiple of
/// the pool width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRemainder {
    Reject,
    /// Drop trailing frames (never pad).
    Truncate,
}

/// Non-overlapping max pooling over `[batch, freq, time, channel]`.
/// Ties go to the first element of the window in (freq, time) order.
pub struct MaxPool2d {
    pool_f: usize,
    pool_t: usize,
    remainder: TimeRemainder,
    cache: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool2d {
    pub fn new(pool_f: usize, pool_t: usize, remainder: TimeRemainder) -> Self {
        assert!(pool_f > 0 && pool_t > 0);
        Self {
            pool_f,
            pool_t,
            remainder,
            cache: None,
        }
    }

    fn out_dims(&self, shape: &[usize]) -> Result<[usize; 4]> {
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "maxpool2d expects [batch, freq, time, channel], got {shape:?}"
            )));
        }
        let (f, t) = (shape[1], shape[2]);
        if f % self.pool_f != 0 {
            return Err(Error::shape(format!(
                "frequency axis {f} not divisible by pool {}",
                self.pool_f
            )));
        }
        if t % self.pool_t != 0 && self.remainder == TimeRemainder::Reject {
            return Err(Error::shape(format!(
                "time axis {t} not divisible by pool {}",
                self.pool_t
            )));
        }
        let to = t / self.pool_t;
        if to == 0 {
            return Err(Error::shape(format!("time axis {t} shorter than pool {}", self.pool_t)));
        }
        Ok([shape[0], f / self.pool_f, to, shape[3]])
    }

    fn run<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
        let [b, fo, to, c] = self.out_dims(x.shape())?;
        let (f, t) = (x.shape()[1], x.shape()[2]);
        let xd = x.data();
        let mut y = Tensor::zeros(&[b, fo, to, c]);
        let mut arg = vec![0u32; y.len()];
        let yd = y.data_mut();
        for bi in 0..b {
            for fi in 0..fo {
                for ti in 0..to {
                    for ci in 0..c {
                        let mut best = T::neg_infinity();
                        let mut best_i = 0usize;
                        for i in 0..self.pool_f {
                            for j in 0..self.pool_t {
                                let idx = ((bi * f + fi * self.pool_f + i) * t + ti * self.pool_t + j) * c + ci;
                                if xd[idx] > best || (i == 0 && j == 0) {
                                    best = xd[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        let o = ((bi * fo + fi) * to + ti) * c + ci;
                        yd[o] = best;
                        arg[o] = best_i as u32;
                    }
                }
            }
        }
        Ok((y, arg))
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    fn kind(&self) -> &'static str {
        "maxpool2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(self.out_dims(input)?.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x)?.0)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (y, arg) = self.run(x)?;
        self.cache = Some((x.shape().to_vec(), arg));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (shape, arg) = self.cache.as_ref().ok_or_else(|| missing_cache("maxpool2d"))?;
        check_grad_shape(grad, &self.out_dims(shape)?, "maxpool2d")?;
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(shape);
        let d = dx.data_mut();
        for (&i, &g) in arg.iter().zip(grad.data()) {
            d[i as usize] += g;
        }
        Ok(Some(dx))
    }

    fn decisions(&self) -> u64 {
        self.cache
            .as_ref()
            .map_or(0, |(_, a)| fingerprint(a.iter().map(|&v| v as u64)))
    }
}

/// Non-overlapping max pooling along the last axis of `[batch, channel,
/// time]`; trailing samples that do not fill a window are dropped.
pub struct MaxPool1d {
    size: usize,
    cache: Option<(Vec<usize>, Vec<u8>)>,
}

impl MaxPool1d {
    pub fn new(size: usize) -> Self {
        assert!((1..=255).contains(&size));
        Self { size, cache: None }
    }

    fn out_dims(&self, shape: &[usize]) -> Result<[usize; 3]> {
        if shape.len() != 3 {
            return Err(Error::shape(format!(
                "maxpool1d expects [batch, channel, time], got {shape:?}"
            )));
        }
        let to = shape[2] / self.size;
        if to == 0 {
            return Err(Error::shape(format!(
                "time axis {} shorter than pool {}",
                shape[2], self.size
            )));
        }
        Ok([shape[0], shape[1], to])
    }

    fn run<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
        let [b, c, to] = self.out_dims(x.shape())?;
        let t = x.shape()[2];
        let mut y = Tensor::zeros(&[b, c, to]);
        let mut arg = vec![0u8; y.len()];
        for (row, (yrow, arow)) in y
            .data_mut()
            .chunks_mut(to)
            .zip(arg.chunks_mut(to))
            .enumerate()
        {
            let xrow = &x.data()[row * t..(row + 1) * t];
            for (o, (yv, av)) in yrow.iter_mut().zip(arow.iter_mut()).enumerate() {
                let w = &xrow[o * self.size..(o + 1) * self.size];
                let mut best = 0;
                for k in 1..self.size {
                    if w[k] > w[best] {
                        best = k;
                    }
                }
                *yv = w[best];
                *av = best as u8;
            }
        }
        Ok((y, arg))
    }
}

impl<T: Scalar> Layer<T> for MaxPool1d {
    fn kind(&self) -> &'static str {
        "maxpool1d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(self.out_dims(input)?.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x)?.0)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (y, arg) = self.run(x)?;
        self.cache = Some((x.shape().to_vec(), arg));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (shape, arg) = self.cache.as_ref().ok_or_else(|| missing_cache("maxpool1d"))?;
        let [_, _, to] = self.out_dims(shape)?;
        check_grad_shape(grad, &self.out_dims(shape)?, "maxpool1d")?;
        if !need_input_grad {
            return Ok(None);
        }
        let t = shape[2];
        let mut dx = Tensor::zeros(shape);
        let d = dx.data_mut();
        for (i, (&a, &g)) in arg.iter().zip(grad.data()).enumerate() {
            let (row, o) = (i / to, i % to);
            d[row * t + o * self.size + a as usize] += g;
        }
        Ok(Some(dx))
    }

    fn decisions(&self) -> u64 {
        self.cache
            .as_ref()
            .map_or(0, |(_, a)| fingerprint(a.iter().map(|&v| v as u64)))
    }
}

/// Mean over the time axis: `[batch, freq, time, channel]` becomes
/// `[batch, freq, channel]`.
#[derive(Default)]
pub struct TemporalMeanPool {
    cache: Option<Vec<usize>>,
}

impl TemporalMeanPool {
    pub fn new() -> Self {
        Self::default()
    }

    fn check(shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[2] == 0 {
            return Err(Error::shape(format!(
                "temporal mean pooling expects [batch, freq, time>=1, channel], got {shape:?}"
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Layer<T> for TemporalMeanPool {
    fn kind(&self) -> &'static str {
        "meanpool"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Self::check(input)?;
        Ok(vec![input[0], input[1], input[3]])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Self::check(x.shape())?;
        let (b, f, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let mut y = Tensor::zeros(&[b, f, c]);
        let scale = T::one() / T::lit(t as f64);
        let xd = x.data();
        for (row, out) in y.data_mut().chunks_mut(c).enumerate() {
            for ti in 0..t {
                let src = &xd[(row * t + ti) * c..(row * t + ti + 1) * c];
                for (o, &v) in out.iter_mut().zip(src) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o *= scale);
        }
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let shape = self.cache.as_ref().ok_or_else(|| missing_cache("meanpool"))?;
        let (t, c) = (shape[2], shape[3]);
        check_grad_shape(grad, &[shape[0], shape[1], c], "meanpool")?;
        if !need_input_grad {
            return Ok(None);
        }
        let scale = T::one() / T::lit(t as f64);
        let mut dx = Tensor::zeros(shape);
        for (row, g) in grad.data().chunks(c).enumerate() {
            for ti in 0..t {
                let dst = &mut dx.data_mut()[(row * t + ti) * c..(row * t + ti + 1) * c];
                for (d, &v) in dst.iter_mut().zip(g) {
                    *d = v * scale;
                }
            }
        }
        Ok(Some(dx))
    }
}

/// Collapse everything after the batch axis.
#[derive(Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.is_empty() {
            return Err(Error::shape("flatten needs a batch axis"));
        }
        Ok(vec![input[0], input[1..].iter().product()])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = <Self as Layer<T>>::output_shape(self, x.shape())?;
        x.clone().reshape(shape)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        self.cache = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let shape = self.cache.as_ref().ok_or_else(|| missing_cache("flatten"))?;
        if !need_input_grad {
            return Ok(None);
        }
        Ok(Some(grad.clone().reshape(shape.clone())?))
    }
}

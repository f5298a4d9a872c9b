use super::layer::{check_grad_shape, missing_cache};
use super::{Ctx, Layer, Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Batch normalisation over axis 1 of `[batch, features]` or
/// `[batch, channels, time]`.
///
/// Training normalises with batch statistics and folds them into the
/// running estimates with momentum 0.9; inference uses the running
/// estimates.
pub struct BatchNorm<T> {
    features: usize,
    eps: f64,
    momentum: f64,
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Param<T>,
    running_var: Param<T>,
    cache: Option<Cache<T>>,
}

struct Cache<T> {
    shape: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, features: usize) -> Self {
        let ones = Tensor::new(vec![features], vec![T::one(); features]).expect("shape");
        Self {
            features,
            eps: 1e-5,
            momentum: 0.9,
            gamma: Param::new(format!("{name}.gamma"), ones.clone()),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[features])),
            running_mean: Param::buffer(format!("{name}.running_mean"), Tensor::zeros(&[features])),
            running_var: Param::buffer(format!("{name}.running_var"), ones),
            cache: None,
        }
    }

    pub fn gamma_mut(&mut self) -> &mut [T] {
        self.gamma.value.data_mut()
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        self.beta.value.data_mut()
    }

    /// (batch, inner) for a valid input shape.
    fn dims(&self, shape: &[usize]) -> Result<(usize, usize)> {
        let ok = matches!(shape.len(), 2 | 3) && shape[1] == self.features;
        if !ok {
            return Err(Error::shape(format!(
                "batch norm over {} features got shape {shape:?}",
                self.features
            )));
        }
        Ok((shape[0], shape.get(2).copied().unwrap_or(1)))
    }

    fn for_each_feature(b: usize, c: usize, inner: usize, feature: usize) -> impl Iterator<Item = usize> {
        (0..b).flat_map(move |bi| {
            let base = (bi * c + feature) * inner;
            base..base + inner
        })
    }

    fn normalize(&self, x: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> (Tensor<T>, Vec<T>) {
        let (b, inner) = self.dims(x.shape()).expect("validated");
        let mut x_hat = vec![T::zero(); x.len()];
        let mut y = Tensor::zeros(x.shape());
        for f in 0..self.features {
            let (g, bt) = (self.gamma.value.data()[f], self.beta.value.data()[f]);
            for i in Self::for_each_feature(b, self.features, inner, f) {
                let h = T::lit((x.data()[i].as_f64() - mean[f]) * inv_std[f]);
                x_hat[i] = h;
                y.data_mut()[i] = g * h + bt;
            }
        }
        (y, x_hat)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn kind(&self) -> &'static str {
        "batchnorm"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.dims(input)?;
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.dims(x.shape())?;
        let mean: Vec<f64> = self.running_mean.value.to_f64();
        let inv_std: Vec<f64> = self
            .running_var
            .value
            .data()
            .iter()
            .map(|v| 1.0 / (v.as_f64() + self.eps).sqrt())
            .collect();
        Ok(self.normalize(x, &mean, &inv_std).0)
    }

    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (b, inner) = self.dims(x.shape())?;
        if !ctx.training {
            self.cache = None;
            return self.infer(x);
        }
        if b * inner < 2 {
            return Err(Error::shape(
                "batch norm needs at least 2 values per feature (batch x steps) in training",
            ));
        }
        let n = (b * inner) as f64;
        let mut mean = vec![0.0; self.features];
        let mut var = vec![0.0; self.features];
        for f in 0..self.features {
            let m = Self::for_each_feature(b, self.features, inner, f)
                .map(|i| x.data()[i].as_f64())
                .sum::<f64>()
                / n;
            let v = Self::for_each_feature(b, self.features, inner, f)
                .map(|i| (x.data()[i].as_f64() - m).powi(2))
                .sum::<f64>()
                / n;
            mean[f] = m;
            var[f] = v;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (y, x_hat) = self.normalize(x, &mean, &inv_std);

        let mo = self.momentum;
        for (r, &m) in self.running_mean.value.data_mut().iter_mut().zip(&mean) {
            *r = T::lit(mo * r.as_f64() + (1.0 - mo) * m);
        }
        for (r, &v) in self.running_var.value.data_mut().iter_mut().zip(&var) {
            *r = T::lit(mo * r.as_f64() + (1.0 - mo) * v);
        }
        self.cache = Some(Cache {
            shape: x.shape().to_vec(),
            x_hat,
            inv_std,
        });
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| missing_cache("batchnorm (training mode)"))?;
        check_grad_shape(grad, &cache.shape, "batchnorm")?;
        let (b, inner) = self.dims(&cache.shape)?;
        let n = (b * inner) as f64;
        let mut dgamma = vec![0.0; self.features];
        let mut dbeta = vec![0.0; self.features];
        for f in 0..self.features {
            for i in Self::for_each_feature(b, self.features, inner, f) {
                let g = grad.data()[i].as_f64();
                dgamma[f] += g * cache.x_hat[i].as_f64();
                dbeta[f] += g;
            }
        }
        let dx = need_input_grad.then(|| {
            let mut dx = Tensor::zeros(&cache.shape);
            for f in 0..self.features {
                let gamma = self.gamma.value.data()[f].as_f64();
                let scale = gamma * cache.inv_std[f] / n;
                for i in Self::for_each_feature(b, self.features, inner, f) {
                    let g = grad.data()[i].as_f64();
                    let h = cache.x_hat[i].as_f64();
                    dx.data_mut()[i] = T::lit(scale * (n * g - dbeta[f] - h * dgamma[f]));
                }
            }
            dx
        });
        for (d, &v) in self.gamma.grad_mut().iter_mut().zip(&dgamma) {
            *d += T::lit(v);
        }
        for (d, &v) in self.beta.grad_mut().iter_mut().zip(&dbeta) {
            *d += T::lit(v);
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        let v: Vec<f64> = (0..24).map(|i| ((i * 7 % 11) as f64) * 0.3 - 1.0).collect();
        Tensor::from_f64(vec![4, 3, 2], &v).unwrap()
    }

    fn feature_stats(y: &Tensor<f64>, f: usize) -> (f64, f64) {
        let vals: Vec<f64> = (0..4)
            .flat_map(|b| (0..2).map(move |t| (b * 3 + f) * 2 + t))
            .map(|i| y.data()[i])
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn training_output_is_standardised() {
        let mut bn = BatchNorm::<f64>::new("bn", 3);
        let mut rng = crate::rng_from_seed(0);
        let y = bn.forward(&sample(), &mut Ctx::train(&mut rng)).unwrap();
        for f in 0..3 {
            let (m, v) = feature_stats(&y, f);
            assert!(m.abs() < 1e-6);
            // eps = 1e-5 keeps the variance just under one
            assert!((v - 1.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn affine_parameters_apply() {
        let mut plain = BatchNorm::<f64>::new("a", 3);
        let mut shifted = BatchNorm::<f64>::new("b", 3);
        shifted.gamma_mut().iter_mut().for_each(|g| *g = 2.0);
        shifted.beta_mut().iter_mut().for_each(|b| *b = 3.0);
        let mut rng = crate::rng_from_seed(0);
        let a = plain.forward(&sample(), &mut Ctx::train(&mut rng)).unwrap();
        let b = shifted.forward(&sample(), &mut Ctx::train(&mut rng)).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x + 3.0 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_example_batch_rejected_in_training_only() {
        let mut bn = BatchNorm::<f64>::new("bn", 2);
        let x = Tensor::from_f64(vec![1, 2], &[1.0, 2.0]).unwrap();
        let mut rng = crate::rng_from_seed(0);
        assert!(bn.forward(&x, &mut Ctx::train(&mut rng)).is_err());
        assert!(bn.forward(&x, &mut Ctx::eval(&mut rng)).is_ok());
    }

    #[test]
    fn running_statistics_track_batches() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        let x = Tensor::from_f64(vec![2, 1], &[1.0, 3.0]).unwrap();
        let mut rng = crate::rng_from_seed(0);
        bn.forward(&x, &mut Ctx::train(&mut rng)).unwrap();
        assert!((bn.running_mean.value.data()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var.value.data()[0] - (0.9 + 0.1)).abs() < 1e-12);
        let y1 = bn.infer(&x).unwrap();
        let y2 = bn.infer(&x).unwrap();
        assert_eq!(y1, y2);
    }
}

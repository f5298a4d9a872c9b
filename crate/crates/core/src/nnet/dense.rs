use rand::Rng as _;

use super::layer::{check_grad_shape, missing_cache};
use super::linalg::{gemm, Mat};
use super::{Ctx, Layer, Param, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::Rng;

/// Affine map `y = x W + b` on `[batch, inputs]`; `W` is `[inputs, outputs]`.
pub struct Dense<T> {
    inputs: usize,
    outputs: usize,
    weight: Param<T>,
    bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    /// Uniform initialisation with limit `sqrt(gain * 3 / inputs)`; gain 2
    /// suits ReLU-family layers, gain 1 the output layer.
    pub fn new(name: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut Rng) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::config(format!("{name}: dense sizes must be positive")));
        }
        let limit = (gain * 3.0 / inputs as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| T::lit(rng.gen_range(-limit..limit)))
            .collect();
        Ok(Self {
            inputs,
            outputs,
            weight: Param::new(format!("{name}.weight"), Tensor::new(vec![inputs, outputs], w)?),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[outputs])),
            cache: None,
        })
    }

    fn batch(&self, shape: &[usize]) -> Result<usize> {
        if shape.len() != 2 || shape[1] != self.inputs {
            return Err(Error::shape(format!(
                "dense expects [batch, {}], got {shape:?}",
                self.inputs
            )));
        }
        Ok(shape[0])
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![self.batch(input)?, self.outputs])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.batch(x.shape())?;
        let mut y = Tensor::zeros(&[b, self.outputs]);
        for row in y.data_mut().chunks_mut(self.outputs) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            T::one(),
            Mat::new(x.data(), b, self.inputs),
            Mat::new(self.weight.value.data(), self.inputs, self.outputs),
            T::one(),
            y.data_mut(),
        );
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let b = x.shape()[0];
        check_grad_shape(grad, &[b, self.outputs], "dense")?;
        let dy = Mat::new(grad.data(), b, self.outputs);
        gemm(
            T::one(),
            Mat::new(x.data(), b, self.inputs).t(),
            dy,
            T::one(),
            self.weight.grad_mut(),
        );
        let db = self.bias.grad_mut();
        for row in grad.data().chunks(self.outputs) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(&[b, self.inputs]);
        gemm(
            T::one(),
            dy,
            Mat::new(self.weight.value.data(), self.inputs, self.outputs).t(),
            T::zero(),
            dx.data_mut(),
        );
        Ok(Some(dx))
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
    fn dense1_parameter_count() {
        let mut rng = crate::rng_from_seed(0);
        let d = Dense::<f32>::new("d", 1024, 512, 2.0, &mut rng).unwrap();
        assert_eq!(d.params().iter().map(|p| p.numel()).sum::<usize>(), 524_800);
    }

    #[test]
    fn computes_affine_map() {
        let mut rng = crate::rng_from_seed(0);
        let mut d = Dense::<f64>::new("d", 2, 1, 1.0, &mut rng).unwrap();
        d.weight.value.data_mut().copy_from_slice(&[2.0, -1.0]);
        d.bias.value.data_mut()[0] = 0.5;
        let x = Tensor::from_f64(vec![2, 2], &[1.0, 1.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.infer(&x).unwrap().data(), &[1.5, 2.5]);
        assert!(d.infer(&Tensor::zeros(&[1, 3])).is_err());
    }
}

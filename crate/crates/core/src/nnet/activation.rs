use rand::Rng as _;

use super::layer::{check_grad_shape, fingerprint, missing_cache};
use super::{Ctx, Layer, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    LeakyRelu(f64),
    Abs,
}

/// Elementwise nonlinearity.
pub struct Activation {
    kind: ActivationKind,
    // derivative sign per element: 1 for the identity branch, 0 otherwise
    cache: Option<(Vec<usize>, Vec<bool>)>,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn leaky_relu(slope: f64) -> Self {
        Self::new(ActivationKind::LeakyRelu(slope))
    }

    pub fn abs() -> Self {
        Self::new(ActivationKind::Abs)
    }

    fn apply<T: Scalar>(&self, v: T) -> T {
        match self.kind {
            ActivationKind::Relu => v.max(T::zero()),
            ActivationKind::LeakyRelu(s) => {
                if v > T::zero() {
                    v
                } else {
                    v * T::lit(s)
                }
            }
            ActivationKind::Abs => v.abs(),
        }
    }
}

impl<T: Scalar> Layer<T> for Activation {
    fn kind(&self) -> &'static str {
        match self.kind {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu(_) => "leaky_relu",
            ActivationKind::Abs => "abs",
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let data = x.data().iter().map(|&v| self.apply(v)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let positive = x.data().iter().map(|&v| v > T::zero()).collect();
        self.cache = Some((x.shape().to_vec(), positive));
        self.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (shape, positive) = self.cache.as_ref().ok_or_else(|| missing_cache("activation"))?;
        check_grad_shape(grad, shape, "activation")?;
        if !need_input_grad {
            return Ok(None);
        }
        let neg = match self.kind {
            ActivationKind::Relu => T::zero(),
            ActivationKind::LeakyRelu(s) => T::lit(s),
            ActivationKind::Abs => -T::one(),
        };
        let data = grad
            .data()
            .iter()
            .zip(positive)
            .map(|(&g, &p)| if p { g } else { g * neg })
            .collect();
        Ok(Some(Tensor::new(shape.clone(), data)?))
    }

    fn decisions(&self) -> u64 {
        self.cache.as_ref().map_or(0, |(_, p)| {
            fingerprint(p.chunks(64).map(|c| {
                c.iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
            }))
        })
    }
}

/// Max-Feature-Map: output channel `i` is the elementwise maximum of input
/// channels `2i` and `2i + 1` (channel is the last axis). Ties go to `2i`.
#[derive(Default)]
pub struct Mfm {
    cache: Option<(Vec<usize>, Vec<bool>)>,
}

impl Mfm {
    pub fn new() -> Self {
        Self::default()
    }

    fn out_shape(input: &[usize]) -> Result<Vec<usize>> {
        let c = *input.last().ok_or_else(|| Error::shape("mfm needs a channel axis"))?;
        if c % 2 != 0 {
            return Err(Error::shape(format!("mfm needs an even channel count, got {c}")));
        }
        let mut out = input.to_vec();
        *out.last_mut().unwrap() = c / 2;
        Ok(out)
    }

    fn run<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<bool>)> {
        let shape = Self::out_shape(x.shape())?;
        let mut second = Vec::with_capacity(x.len() / 2);
        let data = x
            .data()
            .chunks_exact(2)
            .map(|p| {
                let odd_wins = p[1] > p[0];
                second.push(odd_wins);
                if odd_wins {
                    p[1]
                } else {
                    p[0]
                }
            })
            .collect();
        Ok((Tensor::new(shape, data)?, second))
    }
}

impl<T: Scalar> Layer<T> for Mfm {
    fn kind(&self) -> &'static str {
        "mfm"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Self::out_shape(input)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::run(x)?.0)
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (y, second) = Self::run(x)?;
        self.cache = Some((x.shape().to_vec(), second));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (shape, second) = self.cache.as_ref().ok_or_else(|| missing_cache("mfm"))?;
        check_grad_shape(grad, &Self::out_shape(shape)?, "mfm")?;
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(shape);
        for (i, (&g, &odd)) in grad.data().iter().zip(second).enumerate() {
            dx.data_mut()[2 * i + odd as usize] = g;
        }
        Ok(Some(dx))
    }

    fn decisions(&self) -> u64 {
        self.cache
            .as_ref()
            .map_or(0, |(_, s)| fingerprint(s.iter().map(|&b| b as u64)))
    }
}

/// Inverted dropout: in training, zero each activation with probability
/// `rate` and scale survivors by `1 / (1 - rate)`; identity at inference.
pub struct Dropout {
    rate: f64,
    cache: Option<(Vec<usize>, Option<Vec<bool>>)>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate, cache: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<T: Scalar> Layer<T> for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.clone())
    }

    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        if !ctx.training || self.rate == 0.0 {
            self.cache = Some((x.shape().to_vec(), None));
            return Ok(x.clone());
        }
        let keep: Vec<bool> = (0..x.len()).map(|_| ctx.rng.gen::<f64>() >= self.rate).collect();
        let scale = T::lit(1.0 / (1.0 - self.rate));
        let data = x
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v * scale } else { T::zero() })
            .collect();
        self.cache = Some((x.shape().to_vec(), Some(keep)));
        Tensor::new(x.shape().to_vec(), data)
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (shape, keep) = self.cache.as_ref().ok_or_else(|| missing_cache("dropout"))?;
        check_grad_shape(grad, shape, "dropout")?;
        if !need_input_grad {
            return Ok(None);
        }
        let Some(keep) = keep else {
            return Ok(Some(grad.clone()));
        };
        let scale = T::lit(1.0 / (1.0 - self.rate));
        let data = grad
            .data()
            .iter()
            .zip(keep)
            .map(|(&g, &k)| if k { g * scale } else { T::zero() })
            .collect();
        Ok(Some(Tensor::new(shape.clone(), data)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mfm_halves_channels_and_routes_ties_to_even() {
        let mut m = Mfm::new();
        assert_eq!(
            Layer::<f32>::output_shape(&m, &[1, 256, 100, 32]).unwrap(),
            vec![1, 256, 100, 16]
        );
        let x = Tensor::<f64>::from_f64(vec![1, 4], &[2.0, 2.0, 1.0, -1.0]).unwrap();
        let mut rng = crate::rng_from_seed(0);
        let y = m.forward(&x, &mut Ctx::train(&mut rng)).unwrap();
        assert_eq!(y.data(), &[2.0, 1.0]);
        let dx = m
            .backward(&Tensor::<f64>::from_f64(vec![1, 2], &[1.0, 1.0]).unwrap(), true)
            .unwrap()
            .unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 1.0, 0.0]);
        assert!(Layer::<f32>::output_shape(&m, &[1, 3]).is_err());
    }

    #[test]
    fn leaky_relu_and_abs() {
        let x = Tensor::<f64>::from_f64(vec![3], &[-2.0, 0.0, 3.0]).unwrap();
        assert_eq!(Activation::leaky_relu(0.2).infer(&x).unwrap().data(), &[-0.4, 0.0, 3.0]);
        assert_eq!(Activation::relu().infer(&x).unwrap().data(), &[0.0, 0.0, 3.0]);
        assert_eq!(Activation::abs().infer(&x).unwrap().data(), &[2.0, 0.0, 3.0]);
    }

    #[test]
    fn dropout_rate_zero_is_identity_in_both_modes() {
        let x = Tensor::<f64>::from_f64(vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut d = Dropout::new(0.0).unwrap();
        let mut rng = crate::rng_from_seed(3);
        assert_eq!(d.forward(&x, &mut Ctx::train(&mut rng)).unwrap(), x);
        assert_eq!(d.infer(&x).unwrap(), x);
        assert!(Dropout::new(1.0).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let x = Tensor::<f64>::from_f64(vec![1, 1000], &[1.0; 1000]).unwrap();
        let mut d = Dropout::new(0.5).unwrap();
        let mut rng = crate::rng_from_seed(3);
        let y = d.forward(&x, &mut Ctx::train(&mut rng)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.data().iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
        assert_eq!(d.infer(&x).unwrap(), x);
    }
}

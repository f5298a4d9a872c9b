use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{Param, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rmsprop,
    Adam,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmsprop" => Ok(Algorithm::Rmsprop),
            "adam" => Ok(Algorithm::Adam),
            other => Err(Error::config(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Rmsprop => "rmsprop",
            Algorithm::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Optimiser hyperparameters plus per-parameter moment estimates, keyed by
/// parameter name.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: u64,
    slots: HashMap<String, Slot>,
}

impl OptimizerState {
    pub fn rmsprop(learning_rate: f64) -> Self {
        Self::new(Algorithm::Rmsprop, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(Algorithm::Adam, learning_rate)
    }

    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        Self {
            algorithm,
            learning_rate,
            rho: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: match algorithm {
                Algorithm::Rmsprop => 1e-7,
                Algorithm::Adam => 1e-8,
            },
            steps: 0,
            slots: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every trainable parameter from its accumulated gradient and
    /// then clears all gradients.
    pub fn step<T: Scalar>(&mut self, mut params: Vec<&mut Param<T>>) -> Result<()> {
        if !params.iter().any(|p| p.trainable() && p.has_grad()) {
            return Err(Error::config("optimizer step without any computed gradient"));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &params {
            if p.trainable() && !seen.insert(p.name.as_str()) {
                return Err(Error::config(format!("parameter '{}' registered twice", p.name)));
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let lr = self.learning_rate;
        for p in params.iter_mut() {
            if !p.trainable() {
                continue;
            }
            let n = p.numel();
            let slot = self.slots.entry(p.name.clone()).or_default();
            if slot.second.len() != n {
                slot.second = vec![0.0; n];
                slot.first = match self.algorithm {
                    Algorithm::Adam => vec![0.0; n],
                    Algorithm::Rmsprop => Vec::new(),
                };
            }
            let (values, grads) = p.split_mut();
            match self.algorithm {
                Algorithm::Rmsprop => {
                    for ((v, g), acc) in values.iter_mut().zip(grads).zip(&mut slot.second) {
                        let g = g.as_f64();
                        *acc = self.rho * *acc + (1.0 - self.rho) * g * g;
                        *v = T::lit(v.as_f64() - lr * g / (acc.sqrt() + self.epsilon));
                    }
                }
                Algorithm::Adam => {
                    let c1 = 1.0 - self.beta1.powi(t);
                    let c2 = 1.0 - self.beta2.powi(t);
                    for (((v, g), m), s) in values
                        .iter_mut()
                        .zip(grads)
                        .zip(&mut slot.first)
                        .zip(&mut slot.second)
                    {
                        let g = g.as_f64();
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *s = self.beta2 * *s + (1.0 - self.beta2) * g * g;
                        let step = lr * (*m / c1) / ((*s / c2).sqrt() + self.epsilon);
                        *v = T::lit(v.as_f64() - step);
                    }
                }
            }
        }
        for p in params.iter_mut() {
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Tensor;

    fn scalar_param(v: f64) -> Param<f64> {
        Param::new("p", Tensor::from_f64(vec![1], &[v]).unwrap())
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        for alg in [Algorithm::Rmsprop, Algorithm::Adam] {
            let mut opt = OptimizerState::new(alg, 0.0);
            let mut p = scalar_param(1.5);
            p.grad_mut()[0] = 3.0;
            opt.step(vec![&mut p]).unwrap();
            assert_eq!(p.value.data()[0], 1.5);
            assert_eq!(p.grad()[0], 0.0);
        }
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let (lr, g) = (0.01, 0.5);
        let mut opt = OptimizerState::rmsprop(lr);
        let mut p = scalar_param(0.0);
        p.grad_mut()[0] = g;
        opt.step(vec![&mut p]).unwrap();
        let want = lr * g / (((1.0 - 0.95) * g * g).sqrt() + 1e-7);
        assert!((p.value.data()[0] + want).abs() < 1e-15);
    }

    #[test]
    fn adam_descends_a_quadratic_bowl() {
        let mut opt = OptimizerState::adam(0.1);
        let mut p = scalar_param(1.0);
        // reference update rule run alongside
        let (mut m, mut s, mut r) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=100 {
            let g = 2.0 * p.value.data()[0];
            p.grad_mut()[0] = g;
            opt.step(vec![&mut p]).unwrap();
            let gr = 2.0 * r;
            m = 0.9 * m + 0.1 * gr;
            s = 0.999 * s + 0.001 * gr * gr;
            r -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((s / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((p.value.data()[0] - r).abs() < 1e-12);
        assert!(r.abs() < 0.1);
    }

    #[test]
    fn step_without_gradients_is_an_error() {
        let mut opt = OptimizerState::adam(0.1);
        let mut p = scalar_param(1.0);
        assert!(opt.step(vec![&mut p]).is_err());
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut opt = OptimizerState::adam(0.1);
        let mut p = scalar_param(1.0);
        let mut b = Param::buffer("b", Tensor::<f64>::from_f64(vec![1], &[2.0]).unwrap());
        p.grad_mut()[0] = 1.0;
        b.grad_mut()[0] = 1.0;
        opt.step(vec![&mut p, &mut b]).unwrap();
        assert_eq!(b.value.data()[0], 2.0);
    }
}

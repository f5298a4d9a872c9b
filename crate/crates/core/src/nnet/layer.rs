use super::{Param, Scalar, Tensor};
use crate::error::Result;
use crate::Rng;

/// State for a caching forward pass.
pub struct Ctx<'a> {
    /// Training behaviour for dropout and batch norm.
    pub training: bool,
    pub rng: &'a mut Rng,
}

impl<'a> Ctx<'a> {
    pub fn train(rng: &'a mut Rng) -> Self {
        Self { training: true, rng }
    }

    pub fn eval(rng: &'a mut Rng) -> Self {
        Self {
            training: false,
            rng,
        }
    }
}

pub trait Layer<T: Scalar>: Send + Sync {
    /// Short layer type name, e.g. `conv2d`.
    fn kind(&self) -> &'static str;

    /// Output shape for an input shape (batch dimension included).
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// Inference pass; touches no layer state.
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Forward pass that caches what [`Layer::backward`] needs.
    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>>;

    /// Accumulate parameter gradients for the cached pass and, when asked,
    /// return the gradient with respect to the input.
    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Fingerprint of the branch decisions (max winners, ReLU masks) taken
    /// by the last cached forward pass. Used to detect kinks when checking
    /// gradients numerically.
    fn decisions(&self) -> u64 {
        0
    }
}

/// FNV-1a over a stream of words.
pub(crate) fn fingerprint(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for w in words {
        h ^= w;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn missing_cache(kind: &str) -> crate::Error {
    crate::Error::shape(format!("{kind}: backward called without a cached forward pass"))
}

pub(crate) fn check_grad_shape<T: Scalar>(grad: &Tensor<T>, expected: &[usize], kind: &str) -> Result<()> {
    if grad.shape() != expected {
        return Err(crate::Error::shape(format!(
            "{kind}: gradient shape {:?} does not match output shape {expected:?}",
            grad.shape()
        )));
    }
    Ok(())
}

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major array with a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Require a given rank, naming `what` in the error.
    pub(crate) fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::shape(format!(
                "{what} expects a rank-{rank} input, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// A named parameter: value plus gradient of the same shape.
///
/// Non-trainable parameters (batch-norm running statistics) are stored and
/// checkpointed like any other but never touched by the optimizer.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    grad: Vec<T>,
    trainable: bool,
    has_grad: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
            has_grad: false,
        }
    }

    pub fn buffer(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            trainable: false,
            ..Self::new(name, value)
        }
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    /// Mutable gradient; marks the gradient as populated.
    pub fn grad_mut(&mut self) -> &mut [T] {
        self.has_grad = true;
        &mut self.grad
    }

    pub fn has_grad(&self) -> bool {
        self.has_grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
        self.has_grad = false;
    }

    /// Value and gradient borrowed together.
    pub fn split_mut(&mut self) -> (&mut [T], &[T]) {
        (self.value.data_mut(), &self.grad)
    }
}

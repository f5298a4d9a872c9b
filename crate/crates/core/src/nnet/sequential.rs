use std::ops::Range;

use super::layer::fingerprint;
use super::{Ctx, Layer, Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// One row of a model summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub name: String,
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// Named layers applied in order.
pub struct Sequential<T> {
    layers: Vec<(String, Box<dyn Layer<T>>)>,
}

impl<T: Scalar> Default for Sequential<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer<T> + 'static) -> &mut Self {
        self.layers.push((name.into(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, i: usize) -> &dyn Layer<T> {
        self.layers[i].1.as_ref()
    }

    pub fn layer_name(&self, i: usize) -> &str {
        &self.layers[i].0
    }

    /// Index of the first layer with this name.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|(n, _)| n == name)
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for (name, layer) in &mut self.layers {
            cur = layer.forward(&cur, ctx).map_err(|e| annotate(name, e))?;
        }
        Ok(cur)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.infer_range(0..self.layers.len(), x)
    }

    /// Inference through a contiguous sub-range of layers.
    pub fn infer_range(&self, range: Range<usize>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for (name, layer) in &self.layers[range] {
            cur = layer.infer(&cur).map_err(|e| annotate(name, e))?;
        }
        Ok(cur)
    }

    /// Backpropagates `grad` from the output, accumulating parameter
    /// gradients; returns the input gradient when requested.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let mut cur = grad.clone();
        for (i, (name, layer)) in self.layers.iter_mut().enumerate().rev() {
            let want = i > 0 || need_input_grad;
            match layer.backward(&cur, want).map_err(|e| annotate(name, e))? {
                Some(g) => cur = g,
                None if want => {
                    return Err(Error::shape(format!("{name}: no input gradient produced")));
                }
                None => return Ok(None),
            }
        }
        Ok(need_input_grad.then_some(cur))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|(_, l)| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|(_, l)| l.params_mut()).collect()
    }

    pub fn trainable_params(&self) -> usize {
        self.params().iter().filter(|p| p.trainable()).map(|p| p.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    pub fn decisions(&self) -> u64 {
        fingerprint(self.layers.iter().map(|(_, l)| l.decisions()))
    }

    /// Output shape and trainable parameter count of every layer.
    pub fn summary(&self, input_shape: &[usize]) -> Result<Vec<LayerSummary>> {
        let mut shape = input_shape.to_vec();
        let mut rows = Vec::with_capacity(self.layers.len());
        for (name, layer) in &self.layers {
            shape = layer.output_shape(&shape).map_err(|e| annotate(name, e))?;
            rows.push(LayerSummary {
                name: name.clone(),
                kind: layer.kind(),
                output_shape: shape.clone(),
                params: layer
                    .params()
                    .iter()
                    .filter(|p| p.trainable())
                    .map(|p| p.numel())
                    .sum(),
            });
        }
        Ok(rows)
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(self
            .summary(input_shape)?
            .pop()
            .map_or_else(|| input_shape.to_vec(), |r| r.output_shape))
    }
}

fn annotate(layer: &str, e: Error) -> Error {
    match e {
        Error::Shape(msg) => Error::Shape(format!("{layer}: {msg}")),
        other => other,
    }
}

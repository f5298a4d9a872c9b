//! The three classifier architectures.
//!
//! VGG and LCNN take feature maps laid out as `[batch, bins, frames,
//! channels]`; SincNet takes raw waveform chunks `[batch, samples]`. All
//! three emit two logits per example, class 0 being bonafide.

mod spec;

use std::path::Path;

use crate::dsp::FeatureMap;
use crate::error::{Error, Result};
use crate::nnet::{
    load_checkpoint, log_softmax, save_checkpoint, Activation, BatchNorm, Conv1d, Conv2d, Ctx, Dense,
    Dropout, Flatten, LayerSummary, MaxPool1d, MaxPool2d, Mfm, Scalar, Sequential, SincConv, SincCutoffs,
    TemporalMeanPool, Tensor, TimeRemainder,
};
use crate::Rng;

pub use spec::{DropoutProfile, ModelKind, ModelSpec};

/// Frames per training example for the CNNs.
pub const EXAMPLE_FRAMES: usize = 100;
/// SincNet filter count and length.
pub const SINC_FILTERS: usize = 80;
pub const SINC_LENGTH: usize = 251;
const SINCNET_SLOPE: f64 = 0.2;

/// A built network plus the spec it was built from.
pub struct Model<T: Scalar = f32> {
    spec: ModelSpec,
    net: Sequential<T>,
}

impl<T: Scalar> Model<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn net(&self) -> &Sequential<T> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Sequential<T> {
        &mut self.net
    }

    /// Shape of one training example, without the batch axis.
    pub fn example_shape(&self) -> Vec<usize> {
        match self.spec.kind {
            ModelKind::Sincnet => vec![self.spec.chunk_samples],
            _ => vec![self.spec.input_bins, EXAMPLE_FRAMES, self.spec.input_channels],
        }
    }

    /// Per-layer output shapes and parameter counts for one example.
    pub fn summary(&self) -> Result<Vec<LayerSummary>> {
        let mut shape = vec![1];
        shape.extend(self.example_shape());
        self.net.summary(&shape)
    }

    /// Like [`Model::summary`] for an arbitrary batched input shape.
    pub fn summary_for(&self, input_shape: &[usize]) -> Result<Vec<LayerSummary>> {
        self.check_input(input_shape)?;
        self.net.summary(input_shape)
    }

    /// Logits `[batch, 2]`; caches activations for a following backward
    /// pass.
    pub fn forward_logits(&mut self, x: &Tensor<T>, training: bool, rng: &mut Rng) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let mut ctx = Ctx { training, rng };
        self.net.forward(x, &mut ctx)
    }

    /// Inference-mode logits without touching any cached state.
    pub fn infer_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        self.net.infer(x)
    }

    /// Inference-mode log-probabilities.
    pub fn infer_log_probs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        log_softmax(&self.infer_logits(x)?)
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let ok = match self.spec.kind {
            ModelKind::Sincnet => shape.len() == 2 && shape[1] == self.spec.chunk_samples,
            _ => shape.len() == 4 && shape[1] == self.spec.input_bins && shape[3] == self.spec.input_channels,
        };
        if !ok {
            let expected = match self.spec.kind {
                ModelKind::Sincnet => format!("[batch, {}]", self.spec.chunk_samples),
                _ => format!("[batch, {}, frames, {}]", self.spec.input_bins, self.spec.input_channels),
            };
            return Err(Error::shape(format!(
                "{} model expects {expected}, got {shape:?}",
                self.spec.kind
            )));
        }
        Ok(())
    }

    /// Stacks equally sized feature maps into a network input.
    pub fn feature_batch(&self, maps: &[&FeatureMap]) -> Result<Tensor<T>> {
        let first = maps.first().ok_or_else(|| Error::shape("empty feature batch"))?;
        let mut data = Vec::with_capacity(maps.len() * first.data.len());
        for m in maps {
            if (m.bins, m.frames, m.channels) != (first.bins, first.frames, first.channels) {
                return Err(Error::shape("feature maps in one batch differ in size"));
            }
            data.extend(m.to_network_layout().into_iter().map(T::lit));
        }
        let x = Tensor::new(vec![maps.len(), first.bins, first.frames, first.channels], data)?;
        self.check_input(x.shape())?;
        Ok(x)
    }

    /// Stacks waveform chunks into a SincNet input.
    pub fn chunk_batch(&self, chunks: &[&[f64]]) -> Result<Tensor<T>> {
        let n = self.spec.chunk_samples;
        if let Some(bad) = chunks.iter().find(|c| c.len() != n) {
            return Err(Error::shape(format!("chunk of {} samples, expected {n}", bad.len())));
        }
        let data = chunks.iter().flat_map(|c| c.iter().map(|&v| T::lit(v))).collect();
        let x = Tensor::new(vec![chunks.len(), n], data)?;
        self.check_input(x.shape())?;
        Ok(x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.net.params())
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        load_checkpoint(path, self.net.params_mut())
    }
}

/// Sum of trainable parameter elements.
pub fn count_params<T: Scalar>(m: &Model<T>) -> usize {
    m.net.trainable_params()
}

/// Builds the architecture named by `spec.kind`.
pub fn build<T: Scalar>(spec: &ModelSpec, rng: &mut Rng) -> Result<Model<T>> {
    match spec.kind {
        ModelKind::Vgg => build_vgg(spec, rng),
        ModelKind::Lcnn => build_lcnn(spec, rng),
        ModelKind::Sincnet => build_sincnet(spec, rng),
    }
}

fn expect_kind(spec: &ModelSpec, kind: ModelKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::config(format!("spec is for {}, not {kind}", spec.kind)));
    }
    spec.validate()
}

/// Frequency pooling per block; block 3 also halves time, dropping an odd
/// trailing frame.
fn block_pool(block: usize) -> MaxPool2d {
    if block == 3 {
        MaxPool2d::new(2, 2, TimeRemainder::Truncate)
    } else {
        MaxPool2d::new(2, 1, TimeRemainder::Reject)
    }
}

/// Mean over time, flatten and the three dense layers shared by VGG and
/// LCNN.
fn push_cnn_tail<T: Scalar>(net: &mut Sequential<T>, spec: &ModelSpec, channels: usize, rng: &mut Rng) -> Result<()> {
    let flat = spec.input_bins / 64 * channels;
    let hidden = spec.width(512);
    net.push("MeanPooling", TemporalMeanPool::new());
    net.push("Flatten", Flatten::new());
    net.push("Dense1", Dense::new("Dense1", flat, hidden, 2.0, rng)?);
    net.push("Dense1.relu", Activation::relu());
    net.push("Dense2", Dense::new("Dense2", hidden, hidden, 2.0, rng)?);
    net.push("Dense2.relu", Activation::relu());
    net.push("Dense3", Dense::new("Dense3", hidden, 2, 1.0, rng)?);
    Ok(())
}

/// Six blocks of two 3x3 convolutions (ReLU) and a max pool.
pub fn build_vgg<T: Scalar>(spec: &ModelSpec, rng: &mut Rng) -> Result<Model<T>> {
    expect_kind(spec, ModelKind::Vgg)?;
    let mut net = Sequential::new();
    let mut cin = spec.input_channels;
    for (b, full) in [32, 64, 128, 256, 256, 256].into_iter().enumerate() {
        let block = b + 1;
        let cout = spec.width(full);
        for i in 1..=2 {
            let name = format!("Conv2D-{block}-{i}");
            net.push(name.clone(), Conv2d::new(&name, 3, 3, cin, cout, rng)?);
            net.push(format!("{name}.relu"), Activation::relu());
            cin = cout;
        }
        net.push(format!("MaxPooling-{block}"), block_pool(block));
    }
    push_cnn_tail(&mut net, spec, cin, rng)?;
    Ok(Model { spec: spec.clone(), net })
}

/// A 5x5 convolution block followed by five 1x1/3x3 pairs, with
/// Max-Feature-Map as the only conv-stack nonlinearity.
pub fn build_lcnn<T: Scalar>(spec: &ModelSpec, rng: &mut Rng) -> Result<Model<T>> {
    expect_kind(spec, ModelKind::Lcnn)?;
    let mut net = Sequential::new();
    let first = spec.width(32);
    net.push("Conv2D-1-1", Conv2d::new("Conv2D-1-1", 5, 5, spec.input_channels, first, rng)?);
    net.push("MFM-1-1", Mfm::new());
    net.push("MaxPooling-1", block_pool(1));
    let mut cin = first / 2;
    // (1x1 conv outputs, 3x3 conv outputs) before MFM halving
    let blocks = [(32, 64), (64, 128), (128, 256), (256, 512), (512, 512)];
    for (b, (w1, w3)) in blocks.into_iter().enumerate() {
        let block = b + 2;
        for (i, k, full) in [(1, 1, w1), (2, 3, w3)] {
            let name = format!("Conv2D-{block}-{i}");
            let cout = spec.width(full);
            net.push(name.clone(), Conv2d::new(&name, k, k, cin, cout, rng)?);
            net.push(format!("MFM-{block}-{i}"), Mfm::new());
            cin = cout / 2;
        }
        net.push(format!("MaxPooling-{block}"), block_pool(block));
    }
    push_cnn_tail(&mut net, spec, cin, rng)?;
    Ok(Model { spec: spec.clone(), net })
}

/// Mel-spaced initial cutoffs: 81 edges from 30 Hz to 30 Hz below Nyquist.
pub fn sinc_mel_init(sample_rate: u32) -> Result<SincCutoffs> {
    SincCutoffs::mel(SINC_FILTERS, 30.0, sample_rate as f64 / 2.0 - 30.0, sample_rate)
}

/// Sinc front end, two 1-D conv stages and three dense layers, all with
/// batch norm and leaky ReLU.
pub fn build_sincnet<T: Scalar>(spec: &ModelSpec, rng: &mut Rng) -> Result<Model<T>> {
    expect_kind(spec, ModelKind::Sincnet)?;
    let mut net = Sequential::new();
    let sinc = SincConv::new("sinc", &sinc_mel_init(spec.sample_rate)?, SINC_LENGTH)?;
    net.push("sinc", sinc);
    net.push("sinc.abs", Activation::abs());
    net.push("sinc.pool", MaxPool1d::new(3));
    net.push("sinc.bn", BatchNorm::new("sinc.bn", SINC_FILTERS));
    net.push("sinc.act", Activation::leaky_relu(SINCNET_SLOPE));
    let mut cin = SINC_FILTERS;
    let conv_width = spec.width(60);
    for i in 1..=2 {
        let name = format!("conv{i}");
        net.push(name.clone(), Conv1d::new(&name, cin, conv_width, 5, rng)?);
        net.push(format!("{name}.pool"), MaxPool1d::new(3));
        net.push(format!("{name}.bn"), BatchNorm::new(&format!("{name}.bn"), conv_width));
        net.push(format!("{name}.act"), Activation::leaky_relu(SINCNET_SLOPE));
        cin = conv_width;
    }
    net.push("flatten", Flatten::new());
    let steps = spec::sincnet_steps(spec.chunk_samples).expect("validated chunk length");
    let mut width = steps * conv_width;
    let hidden = spec.width(2048);
    let rate = spec.dropout_profile.rate();
    for i in 1..=3 {
        let name = format!("fc{i}");
        net.push(name.clone(), Dense::new(&name, width, hidden, 2.0, rng)?);
        net.push(format!("{name}.bn"), BatchNorm::new(&format!("{name}.bn"), hidden));
        net.push(format!("{name}.act"), Activation::leaky_relu(SINCNET_SLOPE));
        net.push(format!("{name}.dropout"), Dropout::new(rate)?);
        width = hidden;
    }
    net.push("out", Dense::new("out", width, 2, 1.0, rng)?);
    Ok(Model { spec: spec.clone(), net })
}

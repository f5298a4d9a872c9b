use crate::dataio::Waveform;
use crate::dsp::FeatureMap;
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};
use crate::nnet::{log_softmax, Scalar, Tensor};

/// Frames scored per network call.
const FRAME_BATCH: usize = 32;

/// `bonafide_logit - spoof_logit` of one inference pass over the whole
/// utterance.
pub fn score_utterance_cnn<T: Scalar>(model: &Model<T>, features: &FeatureMap) -> Result<f64> {
    if !model.spec().kind.uses_features() {
        return Err(Error::config("feature scoring needs a VGG or LCNN model"));
    }
    if features.frames < 2 {
        return Err(Error::data(format!(
            "utterance has {} frame(s); at least 2 are needed",
            features.frames
        )));
    }
    let logits = model.infer_logits(&model.feature_batch(&[features])?)?;
    Ok(logits.data()[0].as_f64() - logits.data()[1].as_f64())
}

/// Start offsets of `frame`-sample windows advanced by `shift`.
pub fn frame_starts(len: usize, frame: usize, shift: usize) -> Vec<usize> {
    if len < frame || shift == 0 {
        return Vec::new();
    }
    (0..=(len - frame) / shift).map(|i| i * shift).collect()
}

/// Mean frame log-likelihood ratio of an already preprocessed waveform.
///
/// The sinc layer runs once over the whole utterance; each frame's slice of
/// its output then goes through the rest of the network. This equals
/// running every frame through the full model separately.
pub fn score_utterance_sincnet<T: Scalar>(
    model: &Model<T>,
    w: &Waveform,
    frame_ms: u32,
    shift_ms: u32,
) -> Result<f64> {
    let spec = model.spec();
    if spec.kind != ModelKind::Sincnet {
        return Err(Error::config("waveform scoring needs a SincNet model"));
    }
    if w.sample_rate != spec.sample_rate {
        return Err(Error::data(format!(
            "waveform at {} Hz, model expects {} Hz",
            w.sample_rate, spec.sample_rate
        )));
    }
    let frame = (w.sample_rate as u64 * frame_ms as u64 / 1000) as usize;
    let shift = (w.sample_rate as u64 * shift_ms as u64 / 1000) as usize;
    if frame != spec.chunk_samples || shift == 0 {
        return Err(Error::config(format!(
            "frame of {frame} samples (shift {shift}) does not fit a model trained on {}-sample chunks",
            spec.chunk_samples
        )));
    }
    let starts = frame_starts(w.len(), frame, shift);
    if starts.is_empty() {
        return Err(Error::data(format!(
            "utterance of {} samples is shorter than one {frame}-sample frame",
            w.len()
        )));
    }

    let net = model.net();
    let x = Tensor::new(vec![1, w.len()], w.samples.iter().map(|&v| T::lit(v)).collect())?;
    let front = net.infer_range(0..1, &x)?;
    let (filters, cols) = (front.shape()[1], front.shape()[2]);
    let width = frame - (w.len() - cols);
    let mut total = 0.0;
    for group in starts.chunks(FRAME_BATCH) {
        let mut data = Vec::with_capacity(group.len() * filters * width);
        for &s in group {
            for k in 0..filters {
                data.extend_from_slice(&front.data()[k * cols + s..k * cols + s + width]);
            }
        }
        let batch = Tensor::new(vec![group.len(), filters, width], data)?;
        let lp = log_softmax(&net.infer_range(1..net.len(), &batch)?)?;
        for row in lp.data().chunks(2) {
            total += row[0].as_f64() - row[1].as_f64();
        }
    }
    Ok(total / starts.len() as f64)
}

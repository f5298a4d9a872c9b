use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};
use crate::nnet::{softmax_xent, Algorithm, OptimizerState, Scalar, Tensor};
use crate::pipeline::chunks::ChunkSampler;
use crate::pipeline::examples::{make_minibatches, Example};
use crate::{rng_from_seed, Rng};

/// Optimiser, learning-rate plan and stopping rule for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub algorithm: Algorithm,
    /// Rate for epoch `i`; the last entry repeats once the list runs out.
    pub learning_rates: Vec<f64>,
    pub max_epochs: usize,
    /// Examples per minibatch for VGG/LCNN, bonafide/spoof pairs for SincNet.
    pub batch_size: usize,
    /// Fixed number of sampled minibatches per epoch (SincNet). `None` means
    /// one pass over all examples.
    #[serde(default)]
    pub batches_per_epoch: Option<usize>,
    /// Stop after this many epochs without a validation-loss improvement
    /// and restore the best weights.
    #[serde(default)]
    pub patience: Option<usize>,
    /// Sampled validation batches per epoch for SincNet.
    #[serde(default = "default_valid_batches")]
    pub valid_batches: usize,
}

fn default_valid_batches() -> usize {
    4
}

impl Schedule {
    /// RMSprop over 5 epochs of 1000 batches of 128 + 128 chunks.
    pub fn sincnet() -> Self {
        Self {
            algorithm: Algorithm::Rmsprop,
            learning_rates: vec![1e-5, 1e-4, 1e-3, 1e-4, 1e-4],
            max_epochs: 5,
            batch_size: 128,
            batches_per_epoch: Some(1000),
            patience: None,
            valid_batches: default_valid_batches(),
        }
    }

    /// Adam at 1e-4, batches of 128, early stopping with patience 5.
    pub fn cnn() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rates: vec![1e-4],
            max_epochs: 100,
            batch_size: 128,
            batches_per_epoch: None,
            patience: Some(5),
            valid_batches: default_valid_batches(),
        }
    }

    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Sincnet => Self::sincnet(),
            ModelKind::Vgg | ModelKind::Lcnn => Self::cnn(),
        }
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let last = self.learning_rates.len().saturating_sub(1);
        self.learning_rates[epoch.min(last)]
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.learning_rates.is_empty() {
            return Err(Error::config("schedule needs at least one learning rate"));
        }
        if let Some(lr) = self.learning_rates.iter().find(|lr| !lr.is_finite() || **lr < 0.0) {
            return Err(Error::config(format!("invalid learning rate {lr}")));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("max_epochs and batch_size must be positive"));
        }
        if kind == ModelKind::Sincnet && self.batches_per_epoch.unwrap_or(0) == 0 {
            return Err(Error::config("sincnet schedules need batches_per_epoch > 0"));
        }
        if self.patience == Some(0) {
            return Err(Error::config("patience must be at least 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights the model holds after training.
    pub best_epoch: Option<usize>,
}

impl History {
    /// `epoch,train_loss,valid_loss,lr`; an empty field when no validation
    /// data was used.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,lr\n");
        for r in &self.epochs {
            let valid = r.valid_loss.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.17e},{},{:e}", r.epoch, r.train_loss, valid, r.lr);
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Training and validation material for [`train_model`].
pub enum TrainData<'a> {
    /// 100-frame feature examples for VGG/LCNN.
    Examples { train: &'a [Example], valid: &'a [Example] },
    /// Balanced waveform chunks for SincNet.
    Chunks {
        train: &'a ChunkSampler<'a>,
        valid: Option<&'a ChunkSampler<'a>>,
    },
}

/// Callback run after every epoch, e.g. to write a checkpoint.
pub type EpochHook<'h, T> = dyn FnMut(&EpochRecord, &Model<T>) -> Result<()> + 'h;

/// Trains `model` in place. All randomness (batch order, chunk draws,
/// dropout) comes from `rng`.
pub fn train_model<T: Scalar>(
    model: &mut Model<T>,
    data: &TrainData<'_>,
    schedule: &Schedule,
    rng: &mut Rng,
    on_epoch: &mut EpochHook<'_, T>,
) -> Result<History> {
    let kind = model.spec().kind;
    schedule.validate(kind)?;
    match (data, kind) {
        (TrainData::Chunks { .. }, ModelKind::Sincnet) => {}
        (TrainData::Examples { .. }, ModelKind::Vgg | ModelKind::Lcnn) => {}
        _ => return Err(Error::config(format!("training data does not match a {kind} model"))),
    }
    // validation chunks are redrawn from the same seed every epoch so that
    // losses are comparable across epochs
    let valid_seed: u64 = rng.gen();
    let mut opt = OptimizerState::new(schedule.algorithm, schedule.learning_rate(0));
    let mut history = History::default();
    let mut best: Option<(f64, Vec<Tensor<T>>)> = None;
    let mut since_best = 0;

    for epoch in 0..schedule.max_epochs {
        let lr = schedule.learning_rate(epoch);
        opt.learning_rate = lr;
        let train_loss = match data {
            TrainData::Examples { train, .. } => {
                let batches = make_minibatches(train, schedule.batch_size, rng);
                let mut total = 0.0;
                for (i, mb) in batches.iter().enumerate() {
                    let maps: Vec<_> = mb.indices.iter().map(|&j| &train[j].features).collect();
                    let labels: Vec<_> = mb.indices.iter().map(|&j| train[j].key.class_index()).collect();
                    let x = model.feature_batch(&maps)?;
                    let loss = step(model, &mut opt, &x, &labels, rng)
                        .map_err(|e| diverged(e, epoch, i))?;
                    total += loss * labels.len() as f64;
                }
                total / train.len().max(1) as f64
            }
            TrainData::Chunks { train, .. } => {
                let n = schedule.batches_per_epoch.unwrap_or(1);
                let mut total = 0.0;
                for i in 0..n {
                    let batch = train.sample(schedule.batch_size, rng)?;
                    let refs: Vec<&[f64]> = batch.chunks.iter().map(Vec::as_slice).collect();
                    let x = model.chunk_batch(&refs)?;
                    total += step(model, &mut opt, &x, &batch.labels, rng).map_err(|e| diverged(e, epoch, i))?;
                }
                total / n as f64
            }
        };
        let valid_loss = validation_loss(model, data, schedule, valid_seed)?;
        if let Some(v) = valid_loss {
            if !v.is_finite() {
                return Err(Error::Diverged(format!("validation loss {v} after epoch {}", epoch + 1)));
            }
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            valid_loss,
            lr,
        };
        log::info!(
            "epoch {}: train loss {:.5}, valid loss {}, lr {:e}",
            record.epoch,
            train_loss,
            valid_loss.map_or("-".into(), |v| format!("{v:.5}")),
            lr
        );
        on_epoch(&record, model)?;
        history.epochs.push(record);

        if let (Some(patience), Some(v)) = (schedule.patience, valid_loss) {
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, snapshot(model)));
                history.best_epoch = Some(epoch + 1);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    log::info!("no validation improvement for {patience} epochs, stopping");
                    break;
                }
            }
        }
    }
    match best {
        Some((_, weights)) => restore(model, weights),
        None => history.best_epoch = history.epochs.last().map(|r| r.epoch),
    }
    Ok(history)
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Diverged(msg) => Error::Diverged(format!("epoch {} batch {}: {msg}", epoch + 1, batch + 1)),
        other => other,
    }
}

fn step<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut OptimizerState,
    x: &Tensor<T>,
    labels: &[usize],
    rng: &mut Rng,
) -> Result<f64> {
    let logits = model.forward_logits(x, true, rng)?;
    let (loss, grad) = softmax_xent(&logits, labels)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("training loss {loss}")));
    }
    model.net_mut().backward(&grad, false)?;
    opt.step(model.net_mut().params_mut())?;
    Ok(loss)
}

fn validation_loss<T: Scalar>(
    model: &Model<T>,
    data: &TrainData<'_>,
    schedule: &Schedule,
    seed: u64,
) -> Result<Option<f64>> {
    match data {
        TrainData::Examples { valid, .. } => {
            if valid.is_empty() {
                return Ok(None);
            }
            let mut total = 0.0;
            for chunk in valid.chunks(schedule.batch_size) {
                let maps: Vec<_> = chunk.iter().map(|e| &e.features).collect();
                let labels: Vec<_> = chunk.iter().map(|e| e.key.class_index()).collect();
                let (loss, _) = softmax_xent(&model.infer_logits(&model.feature_batch(&maps)?)?, &labels)?;
                total += loss * chunk.len() as f64;
            }
            Ok(Some(total / valid.len() as f64))
        }
        TrainData::Chunks { valid: None, .. } => Ok(None),
        TrainData::Chunks { valid: Some(sampler), .. } => {
            let mut rng = rng_from_seed(seed);
            let n = schedule.valid_batches.max(1);
            let mut total = 0.0;
            for _ in 0..n {
                let batch = sampler.sample(schedule.batch_size, &mut rng)?;
                let refs: Vec<&[f64]> = batch.chunks.iter().map(Vec::as_slice).collect();
                let (loss, _) = softmax_xent(&model.infer_logits(&model.chunk_batch(&refs)?)?, &batch.labels)?;
                total += loss;
            }
            Ok(Some(total / n as f64))
        }
    }
}

fn snapshot<T: Scalar>(model: &Model<T>) -> Vec<Tensor<T>> {
    model.net().params().into_iter().map(|p| p.value.clone()).collect()
}

fn restore<T: Scalar>(model: &mut Model<T>, weights: Vec<Tensor<T>>) {
    for (p, w) in model.net_mut().params_mut().into_iter().zip(weights) {
        p.value = w;
    }
}

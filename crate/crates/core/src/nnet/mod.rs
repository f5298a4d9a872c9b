//! A small tensor engine with explicit forward and backward passes.
//!
//! Every layer implements [`Layer`]: `forward` caches what `backward` needs,
//! `infer` is a pure inference pass usable from several threads at once.
//! Layers are generic over [`Scalar`] so training runs in `f32` while
//! gradient checks run in `f64`.
//!
//! Activation layouts: 2-D feature maps are `[batch, freq, time, channel]`,
//! 1-D signals are `[batch, channel, time]`, dense activations
//! `[batch, features]`.

mod activation;
mod batchnorm;
mod checkpoint;
mod conv1d;
mod conv2d;
mod dense;
mod gradcheck;
mod layer;
mod linalg;
mod loss;
mod optim;
mod pool;
mod scalar;
mod sequential;
mod sinc;
mod tensor;

pub use activation::{Activation, ActivationKind, Dropout, Mfm};
pub use batchnorm::BatchNorm;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv1d::Conv1d;
pub use conv2d::Conv2d;
pub use dense::Dense;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckEntry, GradCheckReport, Probe};
pub use layer::{Ctx, Layer};
pub use loss::{log_softmax, log_softmax_backward, softmax_xent};
pub use optim::{Algorithm, OptimizerState};
pub use pool::{Flatten, MaxPool1d, MaxPool2d, TemporalMeanPool, TimeRemainder};
pub use scalar::Scalar;
pub use sequential::{LayerSummary, Sequential};
pub use sinc::{SincConv, SincCutoffs};
pub use tensor::{Param, Tensor};

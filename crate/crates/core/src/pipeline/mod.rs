//! Training-data strategies and training loops.
//!
//! CNN models see fixed 100-frame examples cut from per-speaker, per-class
//! concatenations of utterance features, grouped into speaker-homogeneous
//! minibatches. SincNet sees balanced batches of raw waveform chunks where
//! every bonafide chunk is paired with a spoofed chunk of the same speaker.

mod chunks;
mod examples;
mod features;
mod split;
pub mod synth;
mod train;

pub use chunks::{preprocess_waveform, sample_chunk_batch, ChunkBatch, ChunkSampler, CHUNK_PAIRS};
pub use examples::{make_examples, make_minibatches, Example, GroupKey, Minibatch};
pub use features::{combine_channels, sha256_hex, FeatureConfig, FeatureExtractor, FeatureKind};
pub use split::{attack_crossval_splits, split_train_valid, CrossvalSplit, SpeakerSplit};
pub use train::{train_model, EpochHook, EpochRecord, History, Schedule, TrainData};

//! Spoofing countermeasures for automatic speaker verification.
//!
//! The crate covers the whole path from audio to error rates:
//!
//! - [`dataio`]: protocol manifests, PCM16 audio, score files and feature caches
//! - [`dsp`]: log power spectrogram and constant-Q features, MVN, energy VAD
//! - [`nnet`]: a small tensor engine with hand-written backward passes,
//!   RMSprop/Adam and finite-difference gradient checking
//! - [`models`]: the VGG, Light CNN (Max-Feature-Map) and SincNet classifiers
//! - [`pipeline`]: example/minibatch generation, balanced chunk sampling,
//!   held-out speaker split, attack cross-validation and training loops
//! - [`eval`]: utterance scoring, equal-weight fusion, EER, min t-DCF and
//!   per-condition breakdowns

pub mod dataio;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod models;
pub mod nnet;
pub mod pipeline;

pub use error::{Error, Result};

/// Seeded generator used for every random decision in the toolkit.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the toolkit generator from a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

//! Protocol manifests, audio, score files and feature caches.

mod cache;
mod protocol;
mod scores;
mod wav;

pub use cache::{read_feature_cache, write_feature_cache, CACHE_MAGIC};
pub use protocol::{parse_protocol, read_protocol, Key, Partition, ProtocolSet, TrialRecord};
pub use scores::{read_scores, write_scores, ScoreSet};
pub use wav::{load_waveform, write_waveform, Waveform};

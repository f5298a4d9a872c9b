//! Locating and loading inputs: protocols, feature caches, audio and
//! trained models.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use antispoof::dataio::{load_waveform, read_feature_cache, read_protocol, Partition, ProtocolSet, Waveform};
use antispoof::dsp::FeatureMap;
use antispoof::models::{Model, ModelSpec};
use antispoof::pipeline::{combine_channels, preprocess_waveform, sha256_hex, FeatureKind};

use crate::{as_input, input_error, RunConfig};

/// Example ids listed in error messages before truncating.
const LISTED: usize = 10;

pub fn load_protocol(path: &Path, partition: Partition) -> Result<ProtocolSet> {
    read_protocol(path, partition).map_err(as_input)
}

pub fn audio_path(cfg: &RunConfig, utt_id: &str) -> PathBuf {
    ProtocolSet::audio_path(&cfg.paths.audio_root, utt_id)
}

pub fn cache_path(cache_dir: &Path, kind: FeatureKind, utt_id: &str) -> PathBuf {
    cache_dir.join(kind.tag()).join(format!("{utt_id}.afc"))
}

/// Sidecar next to each cache entry: `<feature hash> <audio hash>`.
pub fn stamp_path(cache: &Path) -> PathBuf {
    cache.with_extension("stamp")
}

pub fn list_ids(ids: &[&str]) -> String {
    let mut s = ids.iter().take(LISTED).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > LISTED {
        s.push_str(&format!(" and {} more", ids.len() - LISTED));
    }
    s
}

/// Hash of the settings that determine model inputs: the feature config
/// for CNNs, the waveform preprocessing for SincNet.
pub fn input_hash(cfg: &RunConfig) -> Result<String> {
    if cfg.model.kind.uses_features() {
        cfg.features.hash().map_err(anyhow::Error::from)
    } else {
        #[derive(Serialize)]
        struct Preprocessing<'a> {
            sample_rate: u32,
            vad: &'a antispoof::dsp::VadConfig,
        }
        let text = toml::to_string(&Preprocessing {
            sample_rate: cfg.model.sample_rate,
            vad: &cfg.vad,
        })
        .context("serialising VAD settings")?;
        Ok(sha256_hex(text.as_bytes()))
    }
}

/// Reads the cached features of every protocol utterance and combines them
/// into model inputs. Missing or stale entries are reported together.
pub fn load_features(cfg: &RunConfig, protocol: &ProtocolSet) -> Result<HashMap<String, FeatureMap>> {
    let kinds = FeatureKind::for_channels(cfg.model.input_channels).map_err(as_input)?;
    let hash = cfg.features.hash()?;
    let loaded: Vec<std::result::Result<(String, FeatureMap), (String, String)>> = protocol
        .records
        .par_iter()
        .map(|r| {
            let mut maps = Vec::new();
            for &k in kinds {
                let path = cache_path(&cfg.paths.cache_dir, k, &r.utt_id);
                match std::fs::read_to_string(stamp_path(&path)) {
                    Ok(stamp) if stamp.split_whitespace().next() == Some(hash.as_str()) => {}
                    Ok(_) => return Err((r.utt_id.clone(), "stale".to_string())),
                    Err(_) => return Err((r.utt_id.clone(), "missing".to_string())),
                }
                maps.push(read_feature_cache(&path).map_err(|e| (r.utt_id.clone(), e.to_string()))?);
            }
            let map = combine_channels(&maps).map_err(|e| (r.utt_id.clone(), e.to_string()))?;
            Ok((r.utt_id.clone(), map))
        })
        .collect();
    let mut out = HashMap::with_capacity(loaded.len());
    let mut bad = Vec::new();
    for item in loaded {
        match item {
            Ok((id, map)) => {
                out.insert(id, map);
            }
            Err(e) => bad.push(e),
        }
    }
    if !bad.is_empty() {
        let ids: Vec<&str> = bad.iter().map(|(id, _)| id.as_str()).collect();
        return Err(input_error(format!(
            "{} utterances have missing or stale feature caches under {} ({}; first problem: {}); run `antispoof extract` with the same config first",
            bad.len(),
            cfg.paths.cache_dir.display(),
            list_ids(&ids),
            bad[0].1
        )));
    }
    Ok(out)
}

/// Loads and preprocesses (MVN and VAD) the audio of every protocol
/// utterance.
pub fn load_preprocessed_audio(cfg: &RunConfig, protocol: &ProtocolSet) -> Result<HashMap<String, Waveform>> {
    let missing = protocol.missing_audio(&cfg.paths.audio_root);
    if !missing.is_empty() {
        return Err(input_error(format!(
            "{} audio files missing under {}: {}",
            missing.len(),
            cfg.paths.audio_root.display(),
            list_ids(&missing)
        )));
    }
    let loaded: Vec<(String, antispoof::Result<Waveform>)> = protocol
        .records
        .par_iter()
        .map(|r| {
            let w = load_waveform(&audio_path(cfg, &r.utt_id)).and_then(|w| preprocess_waveform(&w, &cfg.vad));
            (r.utt_id.clone(), w)
        })
        .collect();
    let mut out = HashMap::with_capacity(loaded.len());
    let mut bad = Vec::new();
    for (id, w) in loaded {
        match w {
            Ok(w) => {
                out.insert(id, w);
            }
            Err(e) => bad.push(format!("{id}: {e}")),
        }
    }
    if !bad.is_empty() {
        return Err(input_error(format!("unusable audio:\n  {}", bad.join("\n  "))));
    }
    Ok(out)
}

/// Written next to checkpoints so that scoring can rebuild the model and
/// refuse inputs computed with other settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub input_hash: String,
    pub model: ModelSpec,
}

pub const MODEL_META: &str = "model.toml";

impl ModelMeta {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MODEL_META);
        std::fs::write(&path, toml::to_string(self)?).with_context(|| format!("writing {}", path.display()))
    }

    /// Looks in the checkpoint's directory, then its parent (per-epoch
    /// checkpoints live one level down).
    pub fn find(checkpoint: &Path) -> Result<Self> {
        let dir = checkpoint.parent().unwrap_or(Path::new("."));
        let candidates = [dir.join(MODEL_META), dir.join("..").join(MODEL_META)];
        let path = candidates
            .iter()
            .find(|p| p.is_file())
            .ok_or_else(|| input_error(format!("no {MODEL_META} found next to {}", checkpoint.display())))?;
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
    }
}

/// Rebuilds a model from its metadata and loads the checkpoint weights.
pub fn load_model(checkpoint: &Path, meta: &ModelMeta) -> Result<Model> {
    let mut rng = antispoof::rng_from_seed(0);
    let mut model = antispoof::models::build(&meta.model, &mut rng).map_err(as_input)?;
    model.load_weights(checkpoint).map_err(as_input)?;
    Ok(model)
}

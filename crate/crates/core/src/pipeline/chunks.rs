use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;

use crate::dataio::{Key, ProtocolSet, Waveform};
use crate::dsp::{energy_vad, waveform_mvn, VadConfig};
use crate::error::{Error, Result};
use crate::Rng;

/// Bonafide/spoof pairs per SincNet minibatch.
pub const CHUNK_PAIRS: usize = 128;
/// Redraws allowed when a drawn utterance is shorter than one chunk.
const MAX_RETRIES: usize = 100;

/// Waveform normalisation followed by energy VAD.
pub fn preprocess_waveform(w: &Waveform, vad: &VadConfig) -> Result<Waveform> {
    energy_vad(&waveform_mvn(w)?, vad.frame, vad.hop, vad.threshold_db)
}

/// Balanced waveform chunks: `chunks[i]` is bonafide and `chunks[i + n]` its
/// same-speaker spoof partner, `n = chunks.len() / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkBatch {
    pub chunks: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub speakers: Vec<String>,
}

impl ChunkBatch {
    pub fn pairs(&self) -> usize {
        self.chunks.len() / 2
    }
}

/// Draws balanced chunk batches from preprocessed waveforms.
pub struct ChunkSampler<'a> {
    chunk: usize,
    // bonafide utterances as (speaker index, waveform)
    bonafide: Vec<(usize, &'a Waveform)>,
    speakers: Vec<String>,
    spoof: Vec<Vec<&'a Waveform>>,
}

impl<'a> ChunkSampler<'a> {
    /// `store` maps utterance ids to preprocessed waveforms. Every speaker
    /// with bonafide audio needs at least one spoof utterance.
    pub fn new(protocol: &ProtocolSet, store: &'a HashMap<String, Waveform>, chunk: usize) -> Result<Self> {
        let mut per_speaker: BTreeMap<&str, (Vec<&'a Waveform>, Vec<&'a Waveform>)> = BTreeMap::new();
        for r in &protocol.records {
            let w = store
                .get(&r.utt_id)
                .ok_or_else(|| Error::data(format!("no waveform loaded for {}", r.utt_id)))?;
            let entry = per_speaker.entry(&r.speaker_id).or_default();
            match r.key {
                Key::Bonafide => entry.0.push(w),
                Key::Spoof => entry.1.push(w),
            }
        }
        let mut sampler = Self {
            chunk,
            bonafide: Vec::new(),
            speakers: Vec::new(),
            spoof: Vec::new(),
        };
        for (speaker, (bona, spoof)) in per_speaker {
            if bona.is_empty() {
                continue;
            }
            if spoof.is_empty() {
                return Err(Error::data(format!("speaker {speaker} has bonafide audio but no spoof audio")));
            }
            let idx = sampler.speakers.len();
            sampler.speakers.push(speaker.to_string());
            sampler.spoof.push(spoof);
            sampler.bonafide.extend(bona.into_iter().map(|w| (idx, w)));
        }
        if sampler.bonafide.is_empty() {
            return Err(Error::data("no bonafide utterances to sample from"));
        }
        Ok(sampler)
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk
    }

    fn cut(&self, w: &Waveform, rng: &mut Rng) -> Vec<f64> {
        let start = rng.gen_range(0..=w.len() - self.chunk);
        w.samples[start..start + self.chunk].to_vec()
    }

    /// `pairs` bonafide chunks (uniform over utterances and offsets), each
    /// followed in the second half by a spoof chunk of the same speaker.
    pub fn sample(&self, pairs: usize, rng: &mut Rng) -> Result<ChunkBatch> {
        let mut bona = Vec::with_capacity(pairs);
        let mut spoof = Vec::with_capacity(pairs);
        let mut speakers = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            let (spk, w) = (0..MAX_RETRIES)
                .map(|_| self.bonafide[rng.gen_range(0..self.bonafide.len())])
                .find(|(_, w)| w.len() >= self.chunk)
                .ok_or_else(|| {
                    Error::data(format!("no bonafide utterance of {} samples found in {MAX_RETRIES} draws", self.chunk))
                })?;
            let pool = &self.spoof[spk];
            let partner = (0..MAX_RETRIES)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .find(|w| w.len() >= self.chunk)
                .ok_or_else(|| {
                    Error::data(format!(
                        "speaker {} has no spoof utterance of {} samples in {MAX_RETRIES} draws",
                        self.speakers[spk], self.chunk
                    ))
                })?;
            bona.push(self.cut(w, rng));
            spoof.push(self.cut(partner, rng));
            speakers.push(self.speakers[spk].clone());
        }
        let mut all_speakers = speakers.clone();
        all_speakers.extend(speakers);
        bona.extend(spoof);
        Ok(ChunkBatch {
            chunks: bona,
            labels: (0..2 * pairs).map(|i| usize::from(i >= pairs)).collect(),
            speakers: all_speakers,
        })
    }
}

/// One balanced batch of 128 + 128 chunks of `chunk_ms` milliseconds.
pub fn sample_chunk_batch(
    protocol: &ProtocolSet,
    store: &HashMap<String, Waveform>,
    chunk_ms: u32,
    rng: &mut Rng,
) -> Result<ChunkBatch> {
    let rate = store
        .values()
        .next()
        .map(|w| w.sample_rate)
        .ok_or_else(|| Error::data("empty waveform store"))?;
    let chunk = (rate as u64 * chunk_ms as u64 / 1000) as usize;
    ChunkSampler::new(protocol, store, chunk)?.sample(CHUNK_PAIRS, rng)
}

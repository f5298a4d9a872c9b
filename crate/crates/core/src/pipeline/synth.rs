//! Synthetic two-class corpus for smoke tests and toy experiments.
//!
//! Bonafide utterances are syllable-like harmonic tone bursts whose
//! fundamental depends on the speaker. Spoofed utterances start from the same
//! kind of signal and pass through one of four channel distortions:
//!
//! | attack | distortion                              |
//! |--------|-----------------------------------------|
//! | A01    | low-pass at 2 kHz                       |
//! | A02    | sparse-echo reverberation               |
//! | A03    | low-pass at 3 kHz, then reverberation   |
//! | A04    | telephone band-pass, 300 Hz to 3.4 kHz  |
//!
//! Every utterance gets the same white noise floor after normalisation.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{write_waveform, Key, Partition, ProtocolSet, TrialRecord, Waveform};
use crate::error::{Error, Result};
use crate::{rng_from_seed, Rng};

pub const SYNTH_ATTACKS: [&str; 4] = ["A01", "A02", "A03", "A04"];
const NOISE_FLOOR: f64 = 2e-3;
const PEAK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub speakers: usize,
    pub sample_rate: u32,
    pub min_secs: f64,
    pub max_secs: f64,
    /// Per speaker.
    pub train_bonafide: usize,
    /// Per speaker and attack.
    pub train_spoof: usize,
    pub dev_bonafide: usize,
    pub dev_spoof: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            speakers: 4,
            sample_rate: 16000,
            min_secs: 0.6,
            max_secs: 1.0,
            train_bonafide: 30,
            train_spoof: 7,
            dev_bonafide: 20,
            dev_spoof: 5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 || self.speakers > 9 {
            return Err(Error::config("synthetic corpus supports 1 to 9 speakers"));
        }
        if !(self.min_secs >= 0.3 && self.max_secs >= self.min_secs) {
            return Err(Error::config("utterance durations must satisfy 0.3 <= min_secs <= max_secs"));
        }
        if self.sample_rate < 8000 {
            return Err(Error::config("sample rate below 8 kHz"));
        }
        Ok(())
    }

    pub fn utterance_count(&self) -> usize {
        let per_speaker = self.train_bonafide
            + self.dev_bonafide
            + SYNTH_ATTACKS.len() * (self.train_spoof + self.dev_spoof);
        per_speaker * self.speakers
    }
}

/// Protocols of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: ProtocolSet,
    pub dev: ProtocolSet,
}

fn speaker_f0(speaker: usize) -> f64 {
    110.0 * 1.2f64.powi(speaker as i32)
}

fn speaker_id(speaker: usize) -> String {
    format!("SPK{}", speaker + 1)
}

/// A clean, speaker-dependent utterance.
pub fn bonafide_signal(speaker: usize, secs: f64, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let sr = sample_rate as f64;
    let n = (secs * sr) as usize;
    let f0 = speaker_f0(speaker);
    let tilt = 0.8 + 0.1 * speaker as f64;
    let mut out = vec![0.0; n];
    let mut cursor = (rng.gen_range(0.03..0.08) * sr) as usize;
    while cursor < n {
        let len = ((rng.gen_range(0.12..0.26) * sr) as usize).min(n - cursor);
        let (fa, fb) = (f0 * rng.gen_range(0.9..1.1), f0 * rng.gen_range(0.9..1.1));
        let formant = rng.gen_range(500.0..900.0);
        let mut phase = rng.gen_range(0.0..2.0 * PI);
        for i in 0..len {
            let x = i as f64 / len as f64;
            let f = fa + (fb - fa) * x;
            phase += 2.0 * PI * f / sr;
            let env = (PI * x).sin().sqrt();
            let mut v = 0.0;
            let mut h = 1;
            while h as f64 * f < 0.475 * sr {
                let fh = h as f64 * f;
                let boost = 1.0 + 2.0 * (-((fh - formant) / 300.0).powi(2)).exp();
                v += boost * (h as f64 * phase).sin() / (h as f64).powf(tilt);
                h += 1;
            }
            out[cursor + i] = env * v;
        }
        cursor += len + (rng.gen_range(0.03..0.09) * sr) as usize;
    }
    out
}

/// Windowed-sinc low-pass FIR (Hamming, odd length).
fn lowpass_taps(cutoff_hz: f64, sample_rate: u32, taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / sample_rate as f64;
    let m = (taps - 1) as f64 / 2.0;
    let h: Vec<f64> = (0..taps)
        .map(|i| {
            let k = i as f64 - m;
            let sinc = if k == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * k).sin() / (PI * k) };
            sinc * (0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos())
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.into_iter().map(|v| v / dc).collect()
}

/// Linear convolution truncated to the input length (zero-phase for
/// symmetric odd filters).
fn filter(x: &[f64], h: &[f64]) -> Vec<f64> {
    let delay = h.len() / 2;
    (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (j, &hj) in h.iter().enumerate() {
                if let Some(&xv) = (n + delay).checked_sub(j).and_then(|i| x.get(i)) {
                    acc += hj * xv;
                }
            }
            acc
        })
        .collect()
}

fn reverb(x: &[f64], sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let sr = sample_rate as f64;
    let rt60 = rng.gen_range(0.3..0.5);
    let mut out = x.to_vec();
    for _ in 0..48 {
        let delay = (rng.gen_range(0.005..0.3) * sr) as usize;
        let gain = rng.gen_range(-1.0..1.0) * 0.6 * (-6.9 * delay as f64 / (rt60 * sr)).exp();
        for i in delay..x.len() {
            out[i] += gain * x[i - delay];
        }
    }
    out
}

/// Applies one of [`SYNTH_ATTACKS`] to a clean signal.
pub fn apply_attack(x: &[f64], attack: &str, sample_rate: u32, rng: &mut Rng) -> Result<Vec<f64>> {
    Ok(match attack {
        "A01" => filter(x, &lowpass_taps(2000.0, sample_rate, 127)),
        "A02" => reverb(x, sample_rate, rng),
        "A03" => reverb(&filter(x, &lowpass_taps(3000.0, sample_rate, 127)), sample_rate, rng),
        "A04" => {
            let low = filter(x, &lowpass_taps(3400.0, sample_rate, 127));
            let hp = filter(&low, &lowpass_taps(300.0, sample_rate, 127));
            low.iter().zip(hp).map(|(a, b)| a - b).collect()
        }
        other => return Err(Error::config(format!("unknown synthetic attack '{other}'"))),
    })
}

/// Peak-normalises and adds the shared noise floor.
fn finish(mut x: Vec<f64>, rng: &mut Rng) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in &mut x {
        *v = *v * PEAK / peak + NOISE_FLOOR * rng.gen_range(-1.0..1.0);
    }
    x
}

/// One utterance; `attack` is `None` for bonafide.
pub fn synth_utterance(speaker: usize, attack: Option<&str>, cfg: &SynthConfig, rng: &mut Rng) -> Result<Waveform> {
    let secs = rng.gen_range(cfg.min_secs..=cfg.max_secs);
    let clean = bonafide_signal(speaker, secs, cfg.sample_rate, rng);
    let shaped = match attack {
        Some(a) => apply_attack(&clean, a, cfg.sample_rate, rng)?,
        None => clean,
    };
    Waveform::new(finish(shaped, rng), cfg.sample_rate)
}

fn plan(cfg: &SynthConfig, partition: Partition) -> Vec<TrialRecord> {
    let (bona, spoof, prefix) = match partition {
        Partition::Dev => (cfg.dev_bonafide, cfg.dev_spoof, "D"),
        _ => (cfg.train_bonafide, cfg.train_spoof, "T"),
    };
    let mut records = Vec::new();
    for s in 0..cfg.speakers {
        let mut push = |attack: Option<&str>| {
            records.push(TrialRecord {
                speaker_id: speaker_id(s),
                utt_id: String::new(),
                env_id: None,
                attack_id: attack.map(str::to_string),
                key: if attack.is_some() { Key::Spoof } else { Key::Bonafide },
            })
        };
        (0..bona).for_each(|_| push(None));
        for a in SYNTH_ATTACKS {
            (0..spoof).for_each(|_| push(Some(a)));
        }
    }
    for (i, r) in records.iter_mut().enumerate() {
        r.utt_id = format!("{prefix}_{:05}", i + 1);
    }
    records
}

/// Writes `train.txt`, `dev.txt` and `audio/<utt>.wav` under `root`.
pub fn write_synth_corpus(cfg: &SynthConfig, root: &Path) -> Result<SynthCorpus> {
    cfg.validate()?;
    let audio = root.join("audio");
    std::fs::create_dir_all(&audio).map_err(|e| Error::from(e).at(&audio))?;
    let mut sets = Vec::new();
    for (p, tag) in [(Partition::Train, 0u64), (Partition::Dev, 1u64)] {
        let records = plan(cfg, p);
        records.par_iter().enumerate().try_for_each(|(i, r)| {
            let mut rng = rng_from_seed(cfg.seed ^ (tag << 40) ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let speaker = r.speaker_id[3..].parse::<usize>().map_err(|_| Error::data("bad speaker id"))? - 1;
            let w = synth_utterance(speaker, r.attack_id.as_deref(), cfg, &mut rng)?;
            write_waveform(&w, &ProtocolSet::audio_path(&audio, &r.utt_id))
        })?;
        let set = ProtocolSet::new(records, p)?;
        let path = root.join(format!("{p}.txt"));
        std::fs::write(&path, set.to_text()).map_err(|e| Error::from(e).at(&path))?;
        sets.push(set);
    }
    let dev = sets.pop().expect("two partitions");
    let train = sets.pop().expect("two partitions");
    Ok(SynthCorpus { train, dev })
}

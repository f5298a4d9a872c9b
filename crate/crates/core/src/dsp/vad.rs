use crate::dataio::Waveform;
use crate::error::{Error, Result};

/// Energy VAD parameters: frame and hop in samples, threshold in dB below
/// the loudest frame.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadConfig {
    pub frame: usize,
    pub hop: usize,
    pub threshold_db: f64,
}

impl Default for VadConfig {
    /// 25 ms frames, 10 ms hop at 16 kHz; drop frames 40 dB below the peak.
    fn default() -> Self {
        Self {
            frame: 400,
            hop: 160,
            threshold_db: 40.0,
        }
    }
}

/// Remove low-energy frames.
///
/// Frame `i` covers `[i*hop, i*hop + frame)` and decides the fate of the
/// samples `[i*hop, (i+1)*hop)`; the last frame decides its whole span.
/// Samples after the last complete frame are kept as they are.
pub fn energy_vad(w: &Waveform, frame: usize, hop: usize, threshold_db: f64) -> Result<Waveform> {
    if frame == 0 || hop == 0 || hop > frame {
        return Err(Error::config(format!(
            "VAD needs 0 < hop <= frame, got frame {frame} hop {hop}"
        )));
    }
    if w.len() < frame {
        return Err(Error::data(format!(
            "VAD needs at least {frame} samples, got {}",
            w.len()
        )));
    }
    let n_frames = 1 + (w.len() - frame) / hop;
    let energies: Vec<f64> = (0..n_frames)
        .map(|i| w.samples[i * hop..i * hop + frame].iter().map(|x| x * x).sum())
        .collect();
    let max = energies.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::data("VAD removed every frame (silent utterance)"));
    }
    // E / max >= 10^(-threshold/10)
    let min_energy = max * 10f64.powf(-threshold_db / 10.0);
    let mut out = Vec::with_capacity(w.len());
    let mut kept_any = false;
    for (i, &e) in energies.iter().enumerate() {
        let start = i * hop;
        let end = if i + 1 == n_frames { start + frame } else { start + hop };
        if e >= min_energy {
            kept_any = true;
            out.extend_from_slice(&w.samples[start..end]);
        }
    }
    if !kept_any {
        return Err(Error::data("VAD removed every frame"));
    }
    let covered = (n_frames - 1) * hop + frame;
    out.extend_from_slice(&w.samples[covered..]);
    Ok(Waveform {
        samples: out,
        sample_rate: w.sample_rate,
    })
}

use super::FeatureMap;
use crate::dataio::Waveform;
use crate::error::{Error, Result};

/// Smallest value passed to the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
/// Smallest standard deviation used when normalising a row.
pub const STD_FLOOR: f64 = 1e-8;

/// Natural log of every value (floored), then zero mean and unit variance
/// over time for each (bin, channel) row.
pub fn log_mvn(f: &FeatureMap, floor: f64) -> FeatureMap {
    let mut out = f.clone();
    for v in &mut out.data {
        *v = v.max(floor).ln();
    }
    if out.frames == 0 {
        return out;
    }
    let n = out.frames as f64;
    for c in 0..out.channels {
        for b in 0..out.bins {
            let mean = (0..out.frames).map(|t| out.get(b, t, c)).sum::<f64>() / n;
            let var = (0..out.frames)
                .map(|t| (out.get(b, t, c) - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt().max(STD_FLOOR);
            for t in 0..out.frames {
                let i = out.index(b, t, c);
                out.data[i] = (out.data[i] - mean) / std;
            }
        }
    }
    out
}

/// Stack two single-channel maps as channels 0 and 1, truncating both to
/// the shorter frame count.
pub fn stack_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    if a.channels != 1 || b.channels != 1 {
        return Err(Error::shape(format!(
            "can only stack single-channel maps, got {} and {} channels",
            a.channels, b.channels
        )));
    }
    if a.bins != b.bins {
        return Err(Error::shape(format!(
            "bin mismatch: {} vs {}",
            a.bins, b.bins
        )));
    }
    let frames = a.frames.min(b.frames);
    let mut data = Vec::with_capacity(2 * frames * a.bins);
    data.extend_from_slice(&a.data[..frames * a.bins]);
    data.extend_from_slice(&b.data[..frames * b.bins]);
    FeatureMap::from_vec(a.bins, frames, 2, data)
}

/// Zero mean, unit variance over the whole utterance.
pub fn waveform_mvn(w: &Waveform) -> Result<Waveform> {
    if w.len() < 2 {
        return Err(Error::data("normalisation needs at least two samples"));
    }
    let n = w.len() as f64;
    let mean = w.samples.iter().sum::<f64>() / n;
    let var = w.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let peak = w.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // rounding leaves a tiny variance on constant input
    if !(var > (1e-10 * peak).powi(2)) {
        return Err(Error::data("cannot normalise a constant signal"));
    }
    let std = var.sqrt();
    Ok(Waveform {
        samples: w.samples.iter().map(|x| (x - mean) / std).collect(),
        sample_rate: w.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row_stats(f: &FeatureMap, b: usize, c: usize) -> (f64, f64) {
        let n = f.frames as f64;
        let mean = (0..f.frames).map(|t| f.get(b, t, c)).sum::<f64>() / n;
        let var = (0..f.frames).map(|t| (f.get(b, t, c) - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn constant_map_normalises_to_zero() {
        let f = FeatureMap::from_vec(3, 4, 1, vec![2.5; 12]).unwrap();
        assert!(log_mvn(&f, LOG_FLOOR).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_is_floored_before_log() {
        let f = FeatureMap::from_vec(1, 1, 1, vec![0.0]).unwrap();
        let mut logged = f.clone();
        logged.data[0] = 0.0f64.max(LOG_FLOOR).ln();
        assert_eq!(logged.data[0], (1e-10f64).ln());
        // a single frame is centred to zero
        assert_eq!(log_mvn(&f, LOG_FLOOR).data[0], 0.0);
    }

    proptest! {
        #[test]
        fn rows_have_zero_mean_unit_variance(
            values in proptest::collection::vec(1e-6f64..1e3, 2 * 3 * 7)
        ) {
            let f = FeatureMap::from_vec(3, 7, 2, values).unwrap();
            let g = log_mvn(&f, LOG_FLOOR);
            for c in 0..2 {
                for b in 0..3 {
                    let (mean, var) = row_stats(&g, b, c);
                    let constant = (0..7).all(|t| f.get(b, t, c) == f.get(b, 0, c));
                    prop_assert!(mean.abs() < 1e-9);
                    if !constant {
                        prop_assert!((var - 1.0).abs() < 1e-6, "var {}", var);
                    }
                }
            }
        }
    }

    #[test]
    fn stacking_truncates_and_checks_bins() {
        let a = FeatureMap::zeros(256, 98, 1);
        let b = FeatureMap::zeros(256, 97, 1);
        let s = stack_channels(&a, &b).unwrap();
        assert_eq!((s.bins, s.frames, s.channels), (256, 97, 2));
        assert_eq!(stack_channels(&a, &a).unwrap().frames, 98);
        assert!(stack_channels(&a, &FeatureMap::zeros(128, 98, 1)).is_err());
    }

    #[test]
    fn stacked_channels_keep_order() {
        let a = FeatureMap::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FeatureMap::from_vec(2, 3, 1, vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
        let s = stack_channels(&a, &b).unwrap();
        assert_eq!(s.get(1, 1, 0), 4.0);
        assert_eq!(s.get(1, 1, 1), 8.0);
    }

    #[test]
    fn waveform_mvn_examples() {
        let w = Waveform::new(vec![1.0, 3.0], 16000).unwrap();
        assert_eq!(waveform_mvn(&w).unwrap().samples, vec![-1.0, 1.0]);
        let x = Waveform::new(
            (0..1000).map(|i| ((i * 37 % 101) as f64).sin()).collect(),
            16000,
        )
        .unwrap();
        let once = waveform_mvn(&x).unwrap();
        let twice = waveform_mvn(&once).unwrap();
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(waveform_mvn(&Waveform::new(vec![0.3; 10], 16000).unwrap()).is_err());
    }
}

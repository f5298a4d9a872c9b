use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::dataio::Key;
use crate::dsp::FeatureMap;
use crate::error::{Error, Result};
use crate::models::EXAMPLE_FRAMES;
use crate::Rng;

/// Utterances sharing a speaker and class (attack id, or bonafide when
/// `attack_id` is `None`) are concatenated before segmentation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub speaker_id: String,
    pub attack_id: Option<String>,
}

/// A fixed-length training segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureMap,
    pub speaker_id: String,
    pub key: Key,
    pub attack_id: Option<String>,
}

/// Concatenates each group along time and cuts it into consecutive
/// 100-frame segments, dropping the final partial segment.
pub fn make_examples(groups: &BTreeMap<GroupKey, Vec<FeatureMap>>) -> Result<Vec<Example>> {
    let shape = groups
        .values()
        .flatten()
        .map(|f| (f.bins, f.channels))
        .next()
        .ok_or_else(|| Error::data("no features to segment"))?;
    let mut out = Vec::new();
    for (key, maps) in groups {
        if maps.is_empty() {
            continue;
        }
        if let Some(bad) = maps.iter().find(|f| (f.bins, f.channels) != shape) {
            return Err(Error::shape(format!(
                "speaker {}: feature map {}x{} differs from {}x{}",
                key.speaker_id, bad.bins, bad.channels, shape.0, shape.1
            )));
        }
        let refs: Vec<&FeatureMap> = maps.iter().collect();
        let joined = FeatureMap::concat_frames(&refs)?;
        for s in 0..joined.frames / EXAMPLE_FRAMES {
            out.push(Example {
                features: joined.slice_frames(s * EXAMPLE_FRAMES, EXAMPLE_FRAMES)?,
                speaker_id: key.speaker_id.clone(),
                key: if key.attack_id.is_some() { Key::Spoof } else { Key::Bonafide },
                attack_id: key.attack_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Indices into an example list plus the speakers they come from.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub indices: Vec<usize>,
    pub speakers: BTreeSet<String>,
}

/// Single-speaker batches of `batch_size`, then the pooled per-speaker
/// remainders packed into (possibly mixed) overflow batches. Batch order is
/// shuffled; every example appears exactly once.
pub fn make_minibatches(examples: &[Example], batch_size: usize, rng: &mut Rng) -> Vec<Minibatch> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        by_speaker.entry(&e.speaker_id).or_default().push(i);
    }
    let mut batches = Vec::new();
    let mut leftovers = Vec::new();
    for idx in by_speaker.values_mut() {
        idx.shuffle(rng);
        let full = idx.len() / batch_size * batch_size;
        batches.extend(idx[..full].chunks(batch_size).map(<[usize]>::to_vec));
        leftovers.extend_from_slice(&idx[full..]);
    }
    leftovers.shuffle(rng);
    batches.extend(leftovers.chunks(batch_size).map(<[usize]>::to_vec));
    batches.shuffle(rng);
    batches
        .into_iter()
        .map(|indices| Minibatch {
            speakers: indices.iter().map(|&i| examples[i].speaker_id.clone()).collect(),
            indices,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(frames: usize, fill: f64) -> FeatureMap {
        FeatureMap::from_vec(2, frames, 1, vec![fill; 2 * frames]).unwrap()
    }

    fn key(s: &str, a: Option<&str>) -> GroupKey {
        GroupKey {
            speaker_id: s.into(),
            attack_id: a.map(Into::into),
        }
    }

    #[test]
    fn segments_drop_partial_tail() {
        let mut g = BTreeMap::new();
        g.insert(key("A", None), vec![map(350, 1.0)]);
        g.insert(key("A", Some("A01")), vec![map(99, 2.0)]);
        let ex = make_examples(&g).unwrap();
        assert_eq!(ex.len(), 3);
        assert!(ex.iter().all(|e| e.features.frames == 100 && e.key == Key::Bonafide));
    }

    #[test]
    fn concatenation_precedes_splitting() {
        let mut g = BTreeMap::new();
        g.insert(key("B", Some("AA")), vec![map(60, 1.0), map(60, 2.0)]);
        let ex = make_examples(&g).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].features.get(0, 59, 0), 1.0);
        assert_eq!(ex[0].features.get(0, 60, 0), 2.0);
        assert_eq!(ex[0].attack_id.as_deref(), Some("AA"));
        assert!(make_examples(&BTreeMap::new()).is_err());
    }

    fn examples(counts: &[(&str, usize)]) -> Vec<Example> {
        counts
            .iter()
            .flat_map(|&(s, n)| {
                (0..n).map(move |_| Example {
                    features: map(1, 0.0),
                    speaker_id: s.into(),
                    key: Key::Bonafide,
                    attack_id: None,
                })
            })
            .collect()
    }

    #[test]
    fn packing_rule() {
        let ex = examples(&[("A", 300), ("B", 130)]);
        let mut rng = crate::rng_from_seed(1);
        let b = make_minibatches(&ex, 128, &mut rng);
        let pure_a = b.iter().filter(|m| m.speakers.len() == 1 && m.speakers.contains("A") && m.indices.len() == 128);
        assert_eq!(pure_a.count(), 2);
        assert_eq!(b.len(), 4);
        let short: Vec<_> = b.iter().filter(|m| m.indices.len() < 128).collect();
        assert_eq!(short.len(), 1);
        assert_eq!(short[0].indices.len(), 46);
        let mut all: Vec<usize> = b.iter().flat_map(|m| m.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..430).collect::<Vec<_>>());
    }

    #[test]
    fn reshuffle_changes_composition() {
        let ex = examples(&[("A", 256)]);
        let b1 = make_minibatches(&ex, 128, &mut crate::rng_from_seed(1));
        let b2 = make_minibatches(&ex, 128, &mut crate::rng_from_seed(2));
        assert_eq!(b1.len(), 2);
        assert_ne!(b1, b2);
        let single = make_minibatches(&examples(&[("A", 128)]), 128, &mut crate::rng_from_seed(1));
        assert_eq!(single.len(), 1);
    }
}

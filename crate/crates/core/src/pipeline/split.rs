use std::collections::BTreeSet;

use rand::Rng as _;

use crate::dataio::{Key, ProtocolSet};
use crate::error::{Error, Result};
use crate::Rng;

/// Speakers kept for training and the one held out for validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerSplit {
    pub train: Vec<String>,
    pub valid: String,
}

/// Holds out one uniformly chosen speaker for validation.
pub fn split_train_valid(protocol: &ProtocolSet, rng: &mut Rng) -> Result<SpeakerSplit> {
    let speakers: Vec<String> = protocol.speakers().into_iter().map(String::from).collect();
    if speakers.len() < 2 {
        return Err(Error::data(format!(
            "a validation split needs at least 2 speakers, found {}",
            speakers.len()
        )));
    }
    if speakers.len() == 2 {
        log::warn!("only two speakers: validation uses half of the training speakers");
    }
    let pick = rng.gen_range(0..speakers.len());
    let valid = speakers[pick].clone();
    let train = speakers.into_iter().filter(|s| *s != valid).collect();
    Ok(SpeakerSplit { train, valid })
}

/// One cross-validation fold over attack ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossvalSplit {
    pub train_attacks: Vec<String>,
    pub held_out: Vec<String>,
}

impl CrossvalSplit {
    /// Bonafide trials plus spoof trials of the training attacks.
    pub fn train_part(&self, p: &ProtocolSet) -> ProtocolSet {
        self.keep(p, &self.train_attacks)
    }

    /// Bonafide trials plus spoof trials of the held-out attacks.
    pub fn eval_part(&self, p: &ProtocolSet) -> ProtocolSet {
        self.keep(p, &self.held_out)
    }

    fn keep(&self, p: &ProtocolSet, attacks: &[String]) -> ProtocolSet {
        p.filter(|r| match (&r.key, &r.attack_id) {
            (Key::Bonafide, _) => true,
            (Key::Spoof, Some(a)) => attacks.contains(a),
            (Key::Spoof, None) => false,
        })
    }

    pub fn label(&self) -> String {
        self.held_out.join("+")
    }
}

/// Every way of holding out `k_hold` attacks, in lexicographic order.
pub fn attack_crossval_splits(protocol: &ProtocolSet, k_hold: usize) -> Result<Vec<CrossvalSplit>> {
    let attacks: Vec<String> = protocol.attacks().into_iter().map(String::from).collect();
    if attacks.len() < 2 {
        return Err(Error::config(format!(
            "cross-validation needs at least 2 attacks, found {}",
            attacks.len()
        )));
    }
    if k_hold == 0 || k_hold >= attacks.len() {
        return Err(Error::config(format!(
            "cannot hold out {k_hold} of {} attacks; choose 1..={}",
            attacks.len(),
            attacks.len() - 1
        )));
    }
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k_hold).collect();
    loop {
        let held: BTreeSet<usize> = combo.iter().copied().collect();
        out.push(CrossvalSplit {
            train_attacks: (0..attacks.len())
                .filter(|i| !held.contains(i))
                .map(|i| attacks[i].clone())
                .collect(),
            held_out: combo.iter().map(|&i| attacks[i].clone()).collect(),
        });
        // advance to the next k-combination
        let n = attacks.len();
        let Some(i) = (0..k_hold).rev().find(|&i| combo[i] != i + n - k_hold) else {
            break;
        };
        combo[i] += 1;
        for j in i + 1..k_hold {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(out)
}

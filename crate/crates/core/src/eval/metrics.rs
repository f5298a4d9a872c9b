use serde::{Deserialize, Serialize};

use crate::dataio::{Key, ProtocolSet, ScoreSet};
use crate::error::{Error, Result};

/// One scored trial with its protocol labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrial {
    pub utt_id: String,
    pub score: f64,
    pub key: Key,
    pub env_id: Option<String>,
    pub attack_id: Option<String>,
}

/// Scores joined with their protocol records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledScores {
    pub trials: Vec<LabeledTrial>,
}

impl LabeledScores {
    /// Joins in protocol order; every protocol utterance needs a score.
    pub fn join(scores: &ScoreSet, protocol: &ProtocolSet) -> Result<Self> {
        let missing: Vec<&str> = protocol
            .records
            .iter()
            .filter(|r| !scores.contains(&r.utt_id))
            .map(|r| r.utt_id.as_str())
            .collect();
        if !missing.is_empty() {
            let shown = missing.iter().take(10).copied().collect::<Vec<_>>().join(", ");
            let more = if missing.len() > 10 { format!(" and {} more", missing.len() - 10) } else { String::new() };
            return Err(Error::data(format!(
                "{} protocol utterances have no score: {shown}{more}",
                missing.len()
            )));
        }
        let trials = protocol
            .records
            .iter()
            .map(|r| LabeledTrial {
                utt_id: r.utt_id.clone(),
                score: scores.get(&r.utt_id).expect("checked above"),
                key: r.key,
                env_id: r.env_id.clone(),
                attack_id: r.attack_id.clone(),
            })
            .collect();
        Ok(Self { trials })
    }

    /// Builds unlabelled-condition trials from two score lists.
    pub fn from_scores(bonafide: &[f64], spoof: &[f64]) -> Self {
        let mk = |i: usize, s: f64, key: Key| LabeledTrial {
            utt_id: format!("t{i}"),
            score: s,
            key,
            env_id: None,
            attack_id: None,
        };
        let trials = bonafide
            .iter()
            .map(|&s| (s, Key::Bonafide))
            .chain(spoof.iter().map(|&s| (s, Key::Spoof)))
            .enumerate()
            .map(|(i, (s, k))| mk(i, s, k))
            .collect();
        Self { trials }
    }

    pub fn bonafide(&self) -> Vec<f64> {
        self.scores_of(Key::Bonafide)
    }

    pub fn spoof(&self) -> Vec<f64> {
        self.scores_of(Key::Spoof)
    }

    fn scores_of(&self, key: Key) -> Vec<f64> {
        self.trials.iter().filter(|t| t.key == key).map(|t| t.score).collect()
    }
}

/// Operating point at a threshold: `miss` = bonafide below it, `fa` =
/// spoof at or above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub miss: f64,
    pub fa: f64,
}

/// Rates at `-inf`, every midpoint between adjacent distinct scores, and
/// `+inf`, in increasing threshold order.
pub fn operating_points(bonafide: &[f64], spoof: &[f64]) -> Result<Vec<OperatingPoint>> {
    if bonafide.is_empty() || spoof.is_empty() {
        return Err(Error::data("metrics need at least one bonafide and one spoof score"));
    }
    if bonafide.iter().chain(spoof).any(|s| !s.is_finite()) {
        return Err(Error::data("scores must be finite"));
    }
    let mut all: Vec<(f64, bool)> = bonafide
        .iter()
        .map(|&s| (s, true))
        .chain(spoof.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nb, ns) = (bonafide.len() as f64, spoof.len() as f64);
    let mut points = vec![OperatingPoint {
        threshold: f64::NEG_INFINITY,
        miss: 0.0,
        fa: 1.0,
    }];
    let (mut bona_below, mut spoof_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                bona_below += 1;
            } else {
                spoof_below += 1;
            }
            i += 1;
        }
        let threshold = if i < all.len() { v + (all[i].0 - v) / 2.0 } else { f64::INFINITY };
        points.push(OperatingPoint {
            threshold,
            miss: bona_below as f64 / nb,
            fa: (ns - spoof_below as f64) / ns,
        });
    }
    Ok(points)
}

/// Equal error rate and the threshold where miss and false-alarm rates
/// cross, interpolating linearly between the bracketing operating points.
pub fn eer_from_scores(bonafide: &[f64], spoof: &[f64]) -> Result<(f64, f64)> {
    let pts = operating_points(bonafide, spoof)?;
    let j = pts
        .iter()
        .position(|p| p.miss >= p.fa)
        .expect("the +inf point has miss 1 and fa 0");
    let b = pts[j];
    if b.miss == b.fa {
        return Ok((b.miss, b.threshold));
    }
    let a = pts[j - 1];
    let (da, db) = (a.miss - a.fa, b.miss - b.fa);
    let alpha = -da / (db - da);
    let eer = a.miss + alpha * (b.miss - a.miss);
    let threshold = match (a.threshold.is_finite(), b.threshold.is_finite()) {
        (true, true) => a.threshold + alpha * (b.threshold - a.threshold),
        (true, false) => a.threshold,
        (false, true) => b.threshold,
        (false, false) => 0.0,
    };
    Ok((eer, threshold))
}

pub fn compute_eer(ls: &LabeledScores) -> Result<(f64, f64)> {
    eer_from_scores(&ls.bonafide(), &ls.spoof())
}

/// Priors, costs and the fixed ASV error rates of the tandem detection
/// cost. Defaults follow the ASVspoof 2019 evaluation plan; the ASV rates
/// are placeholders to be replaced by a real ASV system's figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdcfParams {
    pub prior_target: f64,
    pub prior_nontarget: f64,
    pub prior_spoof: f64,
    pub cost_asv_miss: f64,
    pub cost_asv_fa: f64,
    pub cost_cm_miss: f64,
    pub cost_cm_fa: f64,
    pub asv_miss_rate: f64,
    pub asv_fa_rate: f64,
    /// Fraction of spoof trials the ASV system accepts.
    pub asv_spoof_fa_rate: f64,
}

impl Default for TdcfParams {
    fn default() -> Self {
        Self {
            prior_target: 0.9405,
            prior_nontarget: 0.0095,
            prior_spoof: 0.05,
            cost_asv_miss: 1.0,
            cost_asv_fa: 10.0,
            cost_cm_miss: 1.0,
            cost_cm_fa: 10.0,
            asv_miss_rate: 0.02,
            asv_fa_rate: 0.02,
            asv_spoof_fa_rate: 0.4,
        }
    }
}

impl TdcfParams {
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::config(format!("t-DCF parameters: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let priors = [self.prior_target, self.prior_nontarget, self.prior_spoof];
        if priors.iter().any(|p| !(0.0..=1.0).contains(p)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("t-DCF priors must be probabilities summing to 1"));
        }
        let costs = [self.cost_asv_miss, self.cost_asv_fa, self.cost_cm_miss, self.cost_cm_fa];
        if costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::config("t-DCF costs must be positive"));
        }
        let rates = [self.asv_miss_rate, self.asv_fa_rate, self.asv_spoof_fa_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("ASV error rates must lie in [0, 1]"));
        }
        let (c1, c2) = self.coefficients();
        if c1 <= 0.0 || c2 <= 0.0 {
            return Err(Error::config(format!(
                "degenerate t-DCF parameters: C1 = {c1}, C2 = {c2}; both must be positive"
            )));
        }
        Ok(())
    }

    /// `(C1, C2)`: weights of the countermeasure miss and false-alarm
    /// rates in the tandem cost.
    pub fn coefficients(&self) -> (f64, f64) {
        let c1 = self.prior_target * (self.cost_cm_miss - self.cost_asv_miss * self.asv_miss_rate)
            - self.prior_nontarget * self.cost_asv_fa * self.asv_fa_rate;
        let c2 = self.cost_cm_fa * self.prior_spoof * self.asv_spoof_fa_rate;
        (c1, c2)
    }
}

/// Minimum over thresholds of `(C1 * miss + C2 * fa) / min(C1, C2)`, with
/// the threshold attaining it.
pub fn min_tdcf_from_scores(bonafide: &[f64], spoof: &[f64], p: &TdcfParams) -> Result<(f64, f64)> {
    p.validate()?;
    let (c1, c2) = p.coefficients();
    let norm = c1.min(c2);
    let pts = operating_points(bonafide, spoof)?;
    let best = pts
        .iter()
        .map(|pt| ((c1 * pt.miss + c2 * pt.fa) / norm, pt.threshold))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least two operating points");
    Ok(best)
}

pub fn compute_min_tdcf(ls: &LabeledScores, p: &TdcfParams) -> Result<(f64, f64)> {
    min_tdcf_from_scores(&ls.bonafide(), &ls.spoof(), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        let (eer, _) = eer_from_scores(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert_eq!(eer, 0.0);
        let (t, _) = min_tdcf_from_scores(&[0.9, 0.8], &[0.1, 0.2], &TdcfParams::default()).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn crossing_between_interleaved_scores() {
        let (eer, thr) = eer_from_scores(&[0.9, 0.4], &[0.6, 0.1]).unwrap();
        assert_eq!(eer, 0.5);
        assert!((0.4..=0.6).contains(&thr));
    }

    #[test]
    fn interpolates_between_operating_points() {
        // points: (-inf: 0, 1), (1.5: 0, 2/3), (2.5: 0, 1/3), (3.5: 1, 1/3), (+inf: 1, 0)
        let (eer, thr) = eer_from_scores(&[3.0], &[1.0, 2.0, 4.0]).unwrap();
        // crossing of d = -1/3 at 2.5 and +2/3 at 3.5
        assert!((eer - 1.0 / 3.0).abs() < 1e-15);
        assert!((thr - (2.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_cost_one() {
        let (t, _) = min_tdcf_from_scores(&[0.3; 5], &[0.3; 7], &TdcfParams::default()).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_coefficients() {
        let (c1, c2) = TdcfParams::default().coefficients();
        assert!((c1 - (0.9405 * (1.0 - 0.02) - 0.0095 * 10.0 * 0.02)).abs() < 1e-15);
        assert!((c2 - 10.0 * 0.05 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let p = TdcfParams {
            asv_spoof_fa_rate: 0.0,
            ..TdcfParams::default()
        };
        assert!(p.validate().is_err());
        let p = TdcfParams {
            prior_spoof: 0.5,
            ..TdcfParams::default()
        };
        assert!(p.validate().is_err());
        assert!(eer_from_scores(&[], &[1.0]).is_err());
        assert!(TdcfParams::from_toml("cost_cm_fa = 5.0\n").is_ok());
        assert!(TdcfParams::from_toml("bogus = 1\n").is_err());
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::metrics::{eer_from_scores, min_tdcf_from_scores, LabeledScores, TdcfParams};
use crate::dataio::Key;
use crate::error::{Error, Result};

/// How spoof trials are grouped into conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    /// `env:attack`, e.g. `aaa:AA`.
    EnvAttackPair,
    /// Attack id alone (`AA` .. `CC` for replay, `A01` .. for synthetic).
    AttackId,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attack" | "attack_id" | "attack-id" => Ok(GroupBy::AttackId),
            "env_attack" | "env-attack" | "env_attack_pair" => Ok(GroupBy::EnvAttackPair),
            other => Err(Error::config(format!("unknown grouping '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMetrics {
    pub condition: String,
    pub bonafide: usize,
    pub spoof: usize,
    pub eer: f64,
    pub min_tdcf: f64,
}

/// Pooled metrics followed by one row per condition in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    pub pooled: ConditionMetrics,
    pub conditions: Vec<ConditionMetrics>,
}

fn metrics(name: &str, bona: &[f64], spoof: &[f64], p: &TdcfParams) -> Result<ConditionMetrics> {
    Ok(ConditionMetrics {
        condition: name.to_string(),
        bonafide: bona.len(),
        spoof: spoof.len(),
        eer: eer_from_scores(bona, spoof)?.0,
        min_tdcf: min_tdcf_from_scores(bona, spoof, p)?.0,
    })
}

/// Metrics per condition, each over all bonafide trials plus that
/// condition's spoof trials.
pub fn condition_breakdown(ls: &LabeledScores, group_by: GroupBy, p: &TdcfParams) -> Result<Breakdown> {
    let bona = ls.bonafide();
    let pooled = metrics("pooled", &bona, &ls.spoof(), p)?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in ls.trials.iter().filter(|t| t.key == Key::Spoof) {
        let attack = t.attack_id.as_deref().ok_or_else(|| {
            Error::data(format!("spoof trial {} has no attack id", t.utt_id))
        })?;
        let key = match group_by {
            GroupBy::AttackId => attack.to_string(),
            GroupBy::EnvAttackPair => {
                let env = t.env_id.as_deref().ok_or_else(|| {
                    Error::data(format!("spoof trial {} has no environment id", t.utt_id))
                })?;
                format!("{env}:{attack}")
            }
        };
        groups.entry(key).or_default().push(t.score);
    }
    let conditions = groups
        .iter()
        .map(|(k, spoof)| metrics(k, &bona, spoof, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Breakdown { pooled, conditions })
}

impl Breakdown {
    fn rows(&self) -> impl Iterator<Item = &ConditionMetrics> {
        std::iter::once(&self.pooled).chain(&self.conditions)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,bonafide,spoof,eer,min_tdcf\n");
        for r in self.rows() {
            writeln!(out, "{},{},{},{},{}", r.condition, r.bonafide, r.spoof, r.eer, r.min_tdcf).unwrap();
        }
        out
    }

    /// Conditions as columns, one row per metric.
    pub fn to_text(&self, system: &str) -> String {
        let header: Vec<&str> = self.rows().map(|r| r.condition.as_str()).collect();
        let eer: Vec<String> = self.rows().map(|r| format!("{:.2}", 100.0 * r.eer)).collect();
        let tdcf: Vec<String> = self.rows().map(|r| format!("{:.4}", r.min_tdcf)).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| header[i].len().max(eer[i].len()).max(tdcf[i].len()))
            .collect();
        let label_w = system.len().max("min-tDCF".len()).max("EER[%]".len());
        let mut out = String::new();
        let mut line = |label: &str, cells: &[&str]| {
            let mut l = format!("{label:<label_w$}");
            for (c, w) in cells.iter().zip(&widths) {
                write!(l, "  {c:>w$}").unwrap();
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(system, &header);
        line("EER[%]", &eer.iter().map(String::as_str).collect::<Vec<_>>());
        line("min-tDCF", &tdcf.iter().map(String::as_str).collect::<Vec<_>>());
        out
    }
}

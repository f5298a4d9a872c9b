//! Utterance scoring, score fusion and error-rate metrics.
//!
//! The tandem detection cost follows the ASVspoof 2019 normalised form:
//! with countermeasure miss rate `Pmiss(t)` (bonafide scored below `t`)
//! and false-alarm rate `Pfa(t)` (spoof scored at or above `t`),
//!
//! ```text
//! C1 = P_tar (C_miss_cm - C_miss_asv P_miss_asv) - P_non C_fa_asv P_fa_asv
//! C2 = C_fa_cm P_spoof P_fa_spoof_asv
//! t-DCF(t) = (C1 Pmiss(t) + C2 Pfa(t)) / min(C1, C2)
//! ```
//!
//! and min t-DCF is its minimum over the same threshold grid the EER uses.

mod breakdown;
mod fusion;
mod metrics;
mod scoring;

pub use breakdown::{condition_breakdown, Breakdown, ConditionMetrics, GroupBy};
pub use fusion::fuse;
pub use metrics::{
    compute_eer, compute_min_tdcf, eer_from_scores, min_tdcf_from_scores, operating_points, LabeledScores,
    LabeledTrial, OperatingPoint, TdcfParams,
};
pub use scoring::{frame_starts, score_utterance_cnn, score_utterance_sincnet};

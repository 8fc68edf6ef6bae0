//! Statistical chain: paired signed-rank tests per metric, p-value
//! combination across metrics, and level-weighted discernment aggregation.

pub mod combine;
pub mod discernment;
pub mod rank;
pub mod wilcoxon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use combine::{expert_weights_from_votes, hmp, hmp_weighted, ExpertWeights};
pub use discernment::{
    aggregate_discernment, discernment_score, level_weights, DiscernmentResult, HmpVariant,
    PValueGrid, PValueRow, PidDiscernment,
};
pub use wilcoxon::{
    wilcoxon_enumeration_oracle, wilcoxon_one_sided, Mode, ModeUsed, PairedScores, WilcoxonConfig,
    WilcoxonOutcome, ZeroMethod,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired vectors differ in length ({original} vs {perturbed})")]
    LengthMismatch { original: usize, perturbed: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("n = {n} too large for full sign enumeration (max 20)")]
    TooLargeForEnumeration { n: usize },
    #[error("p-value {0} outside (0, 1]")]
    InvalidPValue(f64),
    #[error("no p-values to combine")]
    EmptyPValues,
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("votes sum to zero")]
    ZeroVotes,
    #[error("empty plan")]
    EmptyPlan,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
}

/// Stats stage options carried in the run config.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct StatsOptions {
    pub mode: Mode,
    pub zero_method: ZeroMethod,
    pub hmp: HmpVariant,
    pub continuity_correction: Option<bool>,
}

impl StatsOptions {
    pub fn wilcoxon_config(&self) -> WilcoxonConfig {
        let defaults = WilcoxonConfig::default();
        WilcoxonConfig {
            mode: self.mode,
            zero_method: self.zero_method,
            continuity_correction: self
                .continuity_correction
                .unwrap_or(defaults.continuity_correction),
        }
    }
}

/// Runs the signed-rank test across a batch of score pairs, in parallel
/// when the `parallel` feature is enabled.
pub fn wilcoxon_batch(
    pairs: &[PairedScores],
    cfg: &WilcoxonConfig,
) -> Result<Vec<WilcoxonOutcome>, StatsError> {
    crate::exec::try_map(pairs, |p| wilcoxon_one_sided(p, cfg))
}

//! Discernment scores: log-transformed combined p-values and their
//! level-weighted aggregates.
//!
//! A combined p-value `p` becomes `D = ln(p) / ln(0.05)`, so `D = 1` marks
//! the 0.05 significance threshold, `D = 0` means no detected difference,
//! and larger is better. Per-perturbation scores are averaged with level
//! weights: levels present in the plan contribute equally, and specs
//! within one level share that level's weight equally. Minima are taken
//! unweighted over all perturbations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::combine::{hmp, hmp_weighted, ExpertWeights};
use super::wilcoxon::{WilcoxonOutcome, P_FLOOR};
use super::StatsError;
use crate::perturb::plan::PerturbationPlan;

/// Significance threshold that maps to `D = 1`.
pub const D_BASE_P: f64 = 0.05;

/// `log_0.05(p)`, with `p` clamped to at least [`P_FLOOR`] to stay finite.
pub fn discernment_score(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(StatsError::InvalidPValue(p));
    }
    Ok(p.max(P_FLOOR).ln() / D_BASE_P.ln())
}

/// How the per-metric p-values are combined per perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HmpVariant {
    /// `1 / sum(1/p_j)`, the reciprocal-sum form without normalization.
    #[default]
    AsWritten,
    /// Uniform weights `1/M` through the weighted combiner, which equals
    /// the harmonic mean of the inputs.
    Normalized,
}

/// Test outcomes for every perturbation x metric cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PValueGrid {
    pub metrics: Vec<String>,
    pub rows: Vec<PValueRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PValueRow {
    pub pid: String,
    pub outcomes: Vec<WilcoxonOutcome>,
}

impl PValueGrid {
    pub fn pids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.pid.clone()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PidDiscernment {
    pub pid: String,
    pub p_combined: f64,
    pub p_combined_ew: f64,
    pub d: f64,
    pub d_ew: f64,
    pub level_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscernmentResult {
    pub per_pid: Vec<PidDiscernment>,
    pub d_avg: f64,
    pub d_min: f64,
    pub d_ew_avg: f64,
    pub d_ew_min: f64,
}

/// Per-pid aggregation weights: with `L` levels present and `c_l` specs at
/// level `l`, every level-`l` spec weighs `1 / (L * c_l)`.
pub fn level_weights(plan: &PerturbationPlan) -> Result<BTreeMap<String, f64>, StatsError> {
    if plan.specs.is_empty() {
        return Err(StatsError::EmptyPlan);
    }
    let mut per_level: BTreeMap<_, usize> = BTreeMap::new();
    for spec in &plan.specs {
        *per_level.entry(spec.level).or_insert(0) += 1;
    }
    let levels = per_level.len() as f64;
    Ok(plan
        .specs
        .iter()
        .map(|s| {
            let c = per_level[&s.level] as f64;
            (s.pid.clone(), 1.0 / (levels * c))
        })
        .collect())
}

/// Combines each grid row, transforms to discernment scores, and reduces
/// to the four aggregates.
pub fn aggregate_discernment(
    grid: &PValueGrid,
    ew: &ExpertWeights,
    weights: &BTreeMap<String, f64>,
    variant: HmpVariant,
) -> Result<DiscernmentResult, StatsError> {
    if grid.rows.is_empty() {
        return Err(StatsError::EmptyPlan);
    }
    let m = grid.metrics.len();
    let uniform = vec![1.0 / m as f64; m];
    let mut per_pid = Vec::with_capacity(grid.rows.len());
    let mut d_avg = 0.0;
    let mut d_ew_avg = 0.0;
    let mut d_min = f64::INFINITY;
    let mut d_ew_min = f64::INFINITY;

    for row in &grid.rows {
        if row.outcomes.len() != m {
            return Err(StatsError::LabelMismatch(format!(
                "pid `{}` has {} outcomes for {} metrics",
                row.pid,
                row.outcomes.len(),
                m
            )));
        }
        let weight = *weights
            .get(&row.pid)
            .ok_or_else(|| StatsError::LabelMismatch(format!("no weight for pid `{}`", row.pid)))?;
        let ew_row = ew.get(&row.pid).ok_or_else(|| {
            StatsError::LabelMismatch(format!("no expert weights for pid `{}`", row.pid))
        })?;
        let ps: Vec<f64> = row.outcomes.iter().map(|o| o.p_value).collect();
        let p_combined = match variant {
            HmpVariant::AsWritten => hmp(&ps)?,
            HmpVariant::Normalized => hmp_weighted(&ps, &uniform)?,
        };
        let p_combined_ew = hmp_weighted(&ps, ew_row)?;
        let d = discernment_score(p_combined)?;
        let d_ew = discernment_score(p_combined_ew)?;
        d_avg += weight * d;
        d_ew_avg += weight * d_ew;
        d_min = d_min.min(d);
        d_ew_min = d_ew_min.min(d_ew);
        per_pid.push(PidDiscernment {
            pid: row.pid.clone(),
            p_combined,
            p_combined_ew,
            d,
            d_ew,
            level_weight: weight,
        });
    }

    Ok(DiscernmentResult {
        per_pid,
        d_avg,
        d_min,
        d_ew_avg,
        d_ew_min,
    })
}

//! Combining per-metric p-values into one value per perturbation.
//!
//! The unweighted combiner is the reciprocal of the summed reciprocals,
//! `1 / sum(1/p_j)`, with no normalizing numerator: it is bounded above by
//! the smallest input and shrinks as metrics are added. The weighted form
//! replaces the uniform contribution with expert weights that sum to one,
//! `1 / sum(w_j/p_j)`, which reduces to a plain harmonic-mean combination
//! when the weights are uniform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

fn check_p(p: f64) -> Result<(), StatsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(StatsError::InvalidPValue(p));
    }
    Ok(())
}

/// Unweighted combination: `1 / sum(1/p_j)`.
pub fn hmp(p_values: &[f64]) -> Result<f64, StatsError> {
    if p_values.is_empty() {
        return Err(StatsError::EmptyPValues);
    }
    if let [p] = p_values {
        // single metric: the combination is the identity, and skipping the
        // reciprocal round-trip keeps it exact rather than ulp-off
        check_p(*p)?;
        return Ok(*p);
    }
    let mut sum = 0.0;
    for &p in p_values {
        check_p(p)?;
        sum += 1.0 / p;
    }
    Ok(1.0 / sum)
}

/// Weighted combination: `1 / sum(w_j/p_j)` with the weights summing to 1.
pub fn hmp_weighted(p_values: &[f64], weights: &[f64]) -> Result<f64, StatsError> {
    if p_values.is_empty() {
        return Err(StatsError::EmptyPValues);
    }
    if p_values.len() != weights.len() {
        return Err(StatsError::LengthMismatch {
            original: p_values.len(),
            perturbed: weights.len(),
        });
    }
    let mut wsum = 0.0;
    for &w in weights {
        if w < 0.0 {
            return Err(StatsError::NegativeWeight(w));
        }
        wsum += w;
    }
    if (wsum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(StatsError::WeightSum(wsum));
    }
    let mut sum = 0.0;
    for (&p, &w) in p_values.iter().zip(weights) {
        check_p(p)?;
        sum += w / p;
    }
    Ok(1.0 / sum)
}

/// Normalizes vote counts into a weight vector, in the given metric order.
/// Metrics absent from the vote map count as zero.
pub fn expert_weights_from_votes(
    votes: &BTreeMap<String, u64>,
    metrics: &[String],
) -> Result<Vec<f64>, StatsError> {
    let total: u64 = metrics
        .iter()
        .map(|m| votes.get(m).copied().unwrap_or(0))
        .sum();
    if total == 0 {
        return Err(StatsError::ZeroVotes);
    }
    Ok(metrics
        .iter()
        .map(|m| votes.get(m).copied().unwrap_or(0) as f64 / total as f64)
        .collect())
}

/// Per-perturbation metric weight vectors.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ExpertWeights {
    /// pid -> weights aligned with the task's metric order.
    pub by_pid: BTreeMap<String, Vec<f64>>,
}

impl ExpertWeights {
    /// Uniform weights for every pid; used when no vote file is supplied.
    pub fn uniform(pids: &[String], metric_count: usize) -> Self {
        let w = vec![1.0 / metric_count as f64; metric_count];
        ExpertWeights {
            by_pid: pids.iter().map(|p| (p.clone(), w.clone())).collect(),
        }
    }

    /// Builds weights from a vote file's per-pid vote maps.
    pub fn from_votes(
        votes: &BTreeMap<String, BTreeMap<String, u64>>,
        metrics: &[String],
    ) -> Result<Self, StatsError> {
        let mut by_pid = BTreeMap::new();
        for (pid, v) in votes {
            by_pid.insert(pid.clone(), expert_weights_from_votes(v, metrics)?);
        }
        Ok(ExpertWeights { by_pid })
    }

    pub fn get(&self, pid: &str) -> Option<&[f64]> {
        self.by_pid.get(pid).map(|v| v.as_slice())
    }
}

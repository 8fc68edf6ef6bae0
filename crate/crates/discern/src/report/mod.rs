//! Run configuration, report assembly, and output writing.

pub mod output;
pub mod pipeline;
pub mod svg;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TaskKind;
use crate::perturb::PerturbationPlan;
use crate::provider::{MockConfig, ProviderConfig};
use crate::stats::{DiscernmentResult, ModeUsed, StatsOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// One benchmarked model: a display name plus its provider endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(flatten)]
    pub provider: ProviderConfig,
}

fn default_n() -> usize {
    100
}
fn default_repeats() -> usize {
    5
}

/// The single document driving a full run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Dataset path, or `builtin:<name>` for a bundled mini corpus.
    pub dataset: String,
    pub task: TaskKind,
    /// Built-in plan name or path to a plan file.
    pub plan: String,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    /// Provider used for LLM perturbations; independent of the models
    /// being benchmarked. Required when the plan has llm specs and the run
    /// is not offline.
    #[serde(default)]
    pub perturb_provider: Option<ProviderConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub stats: StatsOptions,
    /// Drops references shorter than this many characters before subset
    /// sampling.
    #[serde(default)]
    pub min_reference_chars: Option<usize>,
    /// Path to an expert vote file; absent means uniform weights.
    #[serde(default)]
    pub expert_votes: Option<String>,
    /// Score with the seeded mock provider instead of real endpoints.
    #[serde(default)]
    pub offline: bool,
    /// Mock scorer settings for offline runs.
    #[serde(default)]
    pub mock: MockConfig,
    /// Directory of prompt template overrides.
    #[serde(default)]
    pub prompts_dir: Option<String>,
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl RunConfig {
    /// Parses a config document. Validation runs separately so callers can
    /// apply command-line overrides (like `--offline`) first.
    pub fn load(path: &std::path::Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("malformed config: {e}")))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.n == 0 {
            return Err(RunError::Config("n must be at least 1".into()));
        }
        if self.repeats == 0 {
            return Err(RunError::Config("repeats must be at least 1".into()));
        }
        if !self.offline && self.models.is_empty() {
            return Err(RunError::Config(
                "models list is empty and offline mode is off".into(),
            ));
        }
        Ok(())
    }

    /// Model names to score under: configured entries, or the implicit
    /// `mock` model when offline with no entries.
    pub fn model_names(&self) -> Vec<String> {
        if self.models.is_empty() {
            vec!["mock".to_string()]
        } else {
            self.models.iter().map(|m| m.name.clone()).collect()
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        match &self.cache_dir {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from(&self.output_dir).join("cache"),
        }
    }

    /// Canonical hash of the resolved config; stable across field
    /// reordering in the source document.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        canonical_hash(&value)
    }
}

/// 32-hex FNV-1a 128 over the canonical (key-sorted) JSON encoding.
pub fn canonical_hash(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("value serializes");
    let mut h: u128 = 0x6c62272e07bb014262b821756295c58d;
    for b in text.bytes() {
        h ^= b as u128;
        h = h.wrapping_mul(0x0000000001000000000000000000013b);
    }
    format!("{h:032x}")
}

/// Per-cell test summary carried in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub pid: String,
    pub metric: String,
    pub p_value: f64,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_score: Option<f64>,
    pub n_effective: usize,
    pub mode_used: ModeUsed,
    pub all_zero: bool,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub discernment: DiscernmentResult,
    pub tests: Vec<CellSummary>,
    /// Datapoints lost to scoring failures, across all variants/metrics.
    pub score_holes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub tool_version: String,
    pub task: TaskKind,
    pub dataset: String,
    pub plan_name: String,
    pub plan: PerturbationPlan,
    pub seed: u64,
    pub n: usize,
    pub repeats: usize,
    /// Per-pid count of datapoints excluded by perturbation.
    pub exclusions: BTreeMap<String, usize>,
    pub models: Vec<ModelReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error("data: {0}")]
    Data(String),
    #[error("stats: {0}")]
    Stats(String),
}

impl RunError {
    /// Documented process exit codes: 0 ok, 2 config, 3 provider, 4 data,
    /// 5 stats.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Provider(_) => 3,
            RunError::Data(_) => 4,
            RunError::Stats(_) => 5,
        }
    }
}

impl From<crate::corpus::CorpusError> for RunError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<crate::perturb::PlanError> for RunError {
    fn from(e: crate::perturb::PlanError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<crate::perturb::PerturbError> for RunError {
    fn from(e: crate::perturb::PerturbError) -> Self {
        match e {
            crate::perturb::PerturbError::ProviderRequired => RunError::Config(e.to_string()),
            crate::perturb::PerturbError::TaskMismatch { .. } => RunError::Config(e.to_string()),
            crate::perturb::PerturbError::Template(t) => RunError::Config(t.to_string()),
        }
    }
}

impl From<crate::provider::ProviderError> for RunError {
    fn from(e: crate::provider::ProviderError) -> Self {
        RunError::Provider(e.to_string())
    }
}

impl From<crate::stats::StatsError> for RunError {
    fn from(e: crate::stats::StatsError) -> Self {
        RunError::Stats(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Data(format!("io: {e}"))
    }
}

/// Joins per-model results into one report. All models must cover the
/// same pid set.
pub fn assemble_report(
    models: Vec<ModelReport>,
    config: &RunConfig,
    plan_name: &str,
    plan: &PerturbationPlan,
    exclusions: BTreeMap<String, usize>,
    mut warnings: Vec<String>,
) -> Result<BenchmarkReport, RunError> {
    if models.is_empty() {
        return Err(RunError::Config("no models produced results".into()));
    }
    let pid_set: Vec<String> = models[0]
        .discernment
        .per_pid
        .iter()
        .map(|p| p.pid.clone())
        .collect();
    for m in &models[1..] {
        let pids: Vec<String> = m
            .discernment
            .per_pid
            .iter()
            .map(|p| p.pid.clone())
            .collect();
        if pids != pid_set {
            return Err(RunError::Stats(format!(
                "pid set mismatch between models `{}` and `{}`",
                models[0].model, m.model
            )));
        }
    }
    // each warning appears exactly once, first occurrence order
    let mut seen = std::collections::BTreeSet::new();
    warnings.retain(|w| seen.insert(w.clone()));

    Ok(BenchmarkReport {
        schema_version: SCHEMA_VERSION,
        config_hash: config.config_hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        task: config.task,
        dataset: config.dataset.clone(),
        plan_name: plan_name.to_string(),
        plan: plan.clone(),
        seed: config.seed,
        n: config.n,
        repeats: config.repeats,
        exclusions,
        models,
        warnings,
    })
}

//! Seeded mock provider for offline runs and desk-scale testing.
//!
//! Scorer mode answers `Score: s` with `s` drawn from a configurable
//! discrete distribution over the metric scale, seeded by a hash of the
//! prompt and tag so identical requests always get identical answers. When
//! the prompt contains the registered defect marker the drawn score is
//! shifted down by `penalty` (clamped to the scale), which lets offline
//! runs exercise the full discernment chain end to end.
//!
//! Perturber mode extracts the subject text, taken as the penultimate
//! blank-line-separated block of the prompt (the built-in perturbation
//! templates place the text there, just before the trailing `Revised ...:`
//! label), and replaces its first whitespace-delimited word with the
//! marker.

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse};
use crate::rng::{stream_seed, Stream};

pub const DEFAULT_MARKER: &str = "Glorbex";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    Scorer,
    Perturber,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub mode: MockMode,
    pub seed: u64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// `(score, weight)` pairs; weights need not sum to 1.
    pub distribution: Vec<(f64, f64)>,
    /// Subtracted from the drawn score when the prompt contains `marker`.
    pub penalty: f64,
    pub marker: String,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            mode: MockMode::Scorer,
            seed: 0,
            scale_min: 1.0,
            scale_max: 5.0,
            distribution: vec![
                (1.0, 0.05),
                (2.0, 0.10),
                (3.0, 0.20),
                (4.0, 0.40),
                (5.0, 0.25),
            ],
            penalty: 1.0,
            marker: DEFAULT_MARKER.to_string(),
        }
    }
}

impl MockConfig {
    pub fn scorer(seed: u64, penalty: f64) -> Self {
        MockConfig {
            seed,
            penalty,
            ..MockConfig::default()
        }
    }

    pub fn perturber(seed: u64) -> Self {
        MockConfig {
            mode: MockMode::Perturber,
            seed,
            ..MockConfig::default()
        }
    }

    pub fn point_mass(seed: u64, score: f64, penalty: f64) -> Self {
        MockConfig {
            seed,
            penalty,
            distribution: vec![(score, 1.0)],
            ..MockConfig::default()
        }
    }
}

pub(super) fn mock_complete(req: &ChatRequest, cfg: &MockConfig) -> ChatResponse {
    let text = match cfg.mode {
        MockMode::Scorer => {
            let score = draw_score(cfg, &req.user, &req.tag);
            format_score(score)
        }
        MockMode::Perturber => perturb_text(cfg, &req.user),
    };
    let mut meta = serde_json::Map::new();
    meta.insert("model".to_string(), "mock".into());
    ChatResponse {
        text,
        provider_meta: meta,
        from_cache: false,
    }
}

/// Draws a score for `(prompt, tag)` under the mock's documented seeding:
/// a stream seeded by `hash(seed, prompt, tag)` picks from the cumulative
/// distribution, then the defect penalty applies.
pub fn draw_score(cfg: &MockConfig, prompt: &str, tag: &str) -> f64 {
    let mut rng = Stream::from_seed(stream_seed(cfg.seed, prompt, tag));
    let total: f64 = cfg.distribution.iter().map(|(_, w)| w).sum();
    let mut u = rng.unit_f64() * total;
    let mut score = cfg
        .distribution
        .last()
        .map(|(s, _)| *s)
        .unwrap_or(cfg.scale_min);
    for (s, w) in &cfg.distribution {
        if u < *w {
            score = *s;
            break;
        }
        u -= w;
    }
    if prompt.contains(&cfg.marker) {
        score -= cfg.penalty;
    }
    score.clamp(cfg.scale_min, cfg.scale_max)
}

fn format_score(score: f64) -> String {
    if score.fract() == 0.0 {
        format!("Score: {}", score as i64)
    } else {
        format!("Score: {score}")
    }
}

fn perturb_text(cfg: &MockConfig, prompt: &str) -> String {
    let blocks: Vec<&str> = prompt
        .split("\n\n")
        .map(str::trim)
        .filter(|b| !b.is_empty())
        .collect();
    let subject = if blocks.len() >= 2 {
        blocks[blocks.len() - 2]
    } else {
        prompt.trim()
    };
    let mut words: Vec<&str> = subject.split_whitespace().collect();
    if words.is_empty() {
        return cfg.marker.clone();
    }
    words[0] = &cfg.marker;
    words.join(" ")
}

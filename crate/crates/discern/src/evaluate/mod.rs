//! LLM evaluation: prompt rendering, repeated scoring, score parsing, and
//! repeat averaging.
//!
//! Each variant corpus is scored independently per metric: the prompt gets
//! the variant text in the evaluated slot and the datapoint's context in
//! the context slot, never the original reference. Every datapoint is
//! scored `R` times with distinct cache tags; a response that yields no
//! parsable score is re-asked exactly once and then recorded as a hole.
//! Holes propagate through repeat averaging and are later removed by
//! pairwise deletion in the stats stage.

pub mod prompts;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::{context_placeholder, evaluated_placeholder, TemplateStore};

use crate::corpus::{Corpus, TaskKind};
use crate::perturb::VariantCorpus;
use crate::provider::{ChatRequest, Provider, ProviderError};

/// The full placeholder registry; template bodies may only use these.
pub const PLACEHOLDERS: &[&str] = &[
    "ARTICLE_HERE",
    "SUMMARY_HERE",
    "STORY_HERE",
    "ENDING_HERE",
    "QUESTION_HERE",
    "PARAGRAPH_HERE",
    "ANSWER_HERE",
    "SOURCE_HERE",
    "TRANSLATION_HERE",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("template `{template_id}`: scale_min must be below scale_max")]
    BadScale { template_id: String },
    #[error("template `{template_id}` has no placeholders")]
    NoPlaceholder { template_id: String },
    #[error("template `{template_id}` uses unregistered placeholder `{placeholder}`")]
    UnknownPlaceholder {
        template_id: String,
        placeholder: String,
    },
    #[error("missing value for placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("no template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template_id}`: {message}")]
    TemplateIo {
        template_id: String,
        message: String,
    },
    #[error("no score found in response: {preview}")]
    NoScoreFound { preview: String },
    #[error("metric `{metric}` is not defined for task {task}")]
    MetricNotInTask { metric: String, task: TaskKind },
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("variant `{pid}` unusable for metric `{metric}`: {holes} of {scored} scored datapoints are holes")]
    VariantUnusable {
        pid: String,
        metric: String,
        holes: usize,
        scored: usize,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A scoring or rewrite prompt with named placeholders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub metric: String,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl PromptTemplate {
    pub fn new(
        template_id: String,
        body: String,
        metric: String,
        scale_min: f64,
        scale_max: f64,
    ) -> Result<Self, EvalError> {
        if scale_min >= scale_max {
            return Err(EvalError::BadScale { template_id });
        }
        let t = PromptTemplate {
            template_id,
            body,
            metric,
            scale_min,
            scale_max,
        };
        // reject lookalike tokens that are not in the registry
        for token in find_placeholder_tokens(&t.body) {
            if !PLACEHOLDERS.contains(&token.as_str()) {
                return Err(EvalError::UnknownPlaceholder {
                    template_id: t.template_id,
                    placeholder: token,
                });
            }
        }
        if t.placeholders().is_empty() {
            return Err(EvalError::NoPlaceholder {
                template_id: t.template_id,
            });
        }
        Ok(t)
    }

    /// Registry placeholders that occur in the body.
    pub fn placeholders(&self) -> Vec<&'static str> {
        PLACEHOLDERS
            .iter()
            .filter(|p| self.body.contains(**p))
            .copied()
            .collect()
    }
}

/// Scans for `X_HERE`-shaped tokens of uppercase letters and underscores.
fn find_placeholder_tokens(body: &str) -> Vec<String> {
    let bytes = body.as_bytes();
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, &b) in bytes
        .iter()
        .enumerate()
        .chain(std::iter::once((bytes.len(), &b' ')))
    {
        let is_word = b.is_ascii_uppercase() || b == b'_';
        match (start, is_word) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                let token = &body[s..i];
                if token.ends_with("_HERE") && !tokens.contains(&token.to_string()) {
                    tokens.push(token.to_string());
                }
                start = None;
            }
            _ => {}
        }
    }
    tokens
}

/// Substitutes every placeholder occurring in the body; every one must be
/// covered by `fields` and none may remain afterwards.
pub fn render_prompt(
    template: &PromptTemplate,
    fields: &BTreeMap<&str, &str>,
) -> Result<String, EvalError> {
    let mut out = template.body.clone();
    for placeholder in template.placeholders() {
        let value = fields
            .get(placeholder)
            .ok_or_else(|| EvalError::MissingPlaceholder(placeholder.to_string()))?;
        out = out.replace(placeholder, value);
    }
    Ok(out)
}

/// Extracts the first numeric token within `[scale_min, scale_max]`.
/// Out-of-range tokens are skipped, never clamped; prefixes like
/// `Score:`, markdown, and trailing punctuation are tolerated because only
/// digit runs (with one optional decimal point) are considered.
pub fn parse_score(text: &str, scale_min: f64, scale_max: f64) -> Result<f64, EvalError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if let Ok(value) = text[start..i].parse::<f64>() {
                if value >= scale_min && value <= scale_max {
                    return Ok(value);
                }
            }
        } else {
            i += 1;
        }
    }
    Err(EvalError::NoScoreFound {
        preview: text.chars().take(80).collect(),
    })
}

/// One raw scoring response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreCell {
    pub score: Option<f64>,
    pub raw_text: String,
}

/// Raw N x R scores for one variant and metric, in corpus order. Excluded
/// datapoints carry hole rows and never receive provider calls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub pid: String,
    pub metric: String,
    pub repeats: usize,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<ScoreCell>>,
}

/// Repeat-averaged scores; holes preserved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSet {
    pub pid: String,
    pub metric: String,
    pub scores: Vec<Option<f64>>,
}

/// Row means of the matrix; a row with any hole cell averages to a hole.
pub fn average_repeats(matrix: &ScoreMatrix) -> ScoreSet {
    let scores = matrix
        .rows
        .iter()
        .map(|row| {
            if row.is_empty() || row.iter().any(|c| c.score.is_none()) {
                None
            } else {
                Some(row.iter().map(|c| c.score.unwrap()).sum::<f64>() / row.len() as f64)
            }
        })
        .collect();
    ScoreSet {
        pid: matrix.pid.clone(),
        metric: matrix.metric.clone(),
        scores,
    }
}

/// Fraction of scored (non-excluded) datapoints that may end up as holes
/// before the variant is declared unusable.
const MAX_HOLE_FRACTION: f64 = 0.20;

/// Scores every non-excluded datapoint of a variant `repeats` times.
/// Returns the matrix and the warnings it accumulated.
pub fn score_variant(
    variant: &VariantCorpus,
    corpus: &Corpus,
    template: &PromptTemplate,
    provider: &Provider,
    repeats: usize,
) -> Result<(ScoreMatrix, Vec<String>), EvalError> {
    if repeats == 0 {
        return Err(EvalError::ZeroRepeats);
    }
    if !corpus.task.metrics().contains(&template.metric.as_str()) {
        return Err(EvalError::MetricNotInTask {
            metric: template.metric.clone(),
            task: corpus.task,
        });
    }

    let context_slot = context_placeholder(corpus.task);
    let evaluated_slot = evaluated_placeholder(corpus.task);

    let results: Vec<(Vec<ScoreCell>, Vec<String>)> = crate::exec::map(&corpus.datapoints, |dp| {
        let mut warnings = Vec::new();
        if variant.excluded.contains(&dp.id) {
            return (Vec::new(), warnings);
        }
        let text = match variant.texts.get(&dp.id) {
            Some(t) => t,
            None => {
                warnings.push(format!(
                    "variant `{}`: datapoint `{}` missing from texts; treated as excluded",
                    variant.pid, dp.id
                ));
                return (Vec::new(), warnings);
            }
        };
        let mut fields = BTreeMap::new();
        fields.insert(context_slot, dp.context.as_str());
        fields.insert(evaluated_slot, text.as_str());
        let prompt = match render_prompt(template, &fields) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!(
                    "variant `{}` datapoint `{}`: render failed: {e}",
                    variant.pid, dp.id
                ));
                return (Vec::new(), warnings);
            }
        };
        let mut row = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let tag_base = format!(
                "score;pid={};metric={};id={};rep={rep}",
                variant.pid, template.metric, dp.id
            );
            let cell = score_once(provider, template, &prompt, &tag_base, &mut warnings);
            row.push(cell);
        }
        (row, warnings)
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (row, w) in results {
        let row = if row.is_empty() {
            vec![
                ScoreCell {
                    score: None,
                    raw_text: String::new(),
                };
                repeats
            ]
        } else {
            row
        };
        rows.push(row);
        warnings.extend(w);
    }

    let scored_ids: Vec<usize> = corpus
        .datapoints
        .iter()
        .enumerate()
        .filter(|(_, dp)| !variant.excluded.contains(&dp.id))
        .map(|(i, _)| i)
        .collect();
    let holes = scored_ids
        .iter()
        .filter(|&&i| rows[i].iter().any(|c| c.score.is_none()))
        .count();
    if !scored_ids.is_empty() && (holes as f64) > MAX_HOLE_FRACTION * scored_ids.len() as f64 {
        return Err(EvalError::VariantUnusable {
            pid: variant.pid.clone(),
            metric: template.metric.clone(),
            holes,
            scored: scored_ids.len(),
        });
    }

    Ok((
        ScoreMatrix {
            pid: variant.pid.clone(),
            metric: template.metric.clone(),
            repeats,
            ids: corpus.ids(),
            rows,
        },
        warnings,
    ))
}

/// One scored repeat: ask, parse, and on a parse failure re-ask exactly
/// once under a retry tag before recording a hole.
fn score_once(
    provider: &Provider,
    template: &PromptTemplate,
    prompt: &str,
    tag_base: &str,
    warnings: &mut Vec<String>,
) -> ScoreCell {
    let mut raw_text = String::new();
    for attempt in 0..2 {
        let tag = if attempt == 0 {
            tag_base.to_string()
        } else {
            format!("{tag_base};retry=1")
        };
        let req = ChatRequest {
            model: provider.model_name().to_string(),
            system: None,
            user: prompt.to_string(),
            temperature: 0.0,
            tag,
        };
        match provider.complete(&req) {
            Ok(resp) => match parse_score(&resp.text, template.scale_min, template.scale_max) {
                Ok(score) => {
                    return ScoreCell {
                        score: Some(score),
                        raw_text: resp.text,
                    }
                }
                Err(_) => {
                    raw_text = resp.text;
                    if attempt == 1 {
                        warnings.push(format!(
                            "{tag_base}: no parsable score after re-ask; recorded hole"
                        ));
                    }
                }
            },
            Err(e) => {
                warnings.push(format!("{tag_base}: provider failure: {e}; recorded hole"));
                return ScoreCell {
                    score: None,
                    raw_text,
                };
            }
        }
    }
    ScoreCell {
        score: None,
        raw_text,
    }
}

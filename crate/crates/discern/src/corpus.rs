//! Task corpora: loading, validation, subsetting, and the text
//! segmentation primitives shared by perturbation and corpus statistics.
//!
//! The on-disk format is JSONL, one object per line:
//! `{"id": str, "task": str, "context": str, "reference": str,
//! "wrong_ending": str?}`, UTF-8 with LF line endings.
//!
//! Segmentation is deliberately self-contained rather than delegated to an
//! NLP toolkit. Sentences break at `.`, `!` or `?` followed by whitespace
//! (or end of text), except when the token ending in the period is one of
//! the guarded abbreviations `Dr., Mr., Mrs., Ms., St., e.g., i.e., etc.,
//! vs., Fig., No.`. Words split on whitespace with punctuation attached.
//! Character counts are extended grapheme clusters, and "alphanumeric"
//! means a cluster containing a Unicode letter or digit. Absolute counts
//! can therefore differ slightly from other tokenizers; only perturbation
//! magnitudes depend on them.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::rng::Stream;

/// The four supported NLG task kinds, each with a fixed metric list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Summarization,
    StoryCompletion,
    QuestionAnswering,
    Translation,
}

impl TaskKind {
    pub fn metrics(&self) -> &'static [&'static str] {
        match self {
            TaskKind::Summarization => &["coherence", "consistency", "fluency", "relevance"],
            TaskKind::StoryCompletion => &["coherence", "consistency", "fluency"],
            TaskKind::QuestionAnswering => &["answer_quality"],
            TaskKind::Translation => &["accuracy", "fluency"],
        }
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.metrics().iter().map(|m| m.to_string()).collect()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Summarization => "summarization",
            TaskKind::StoryCompletion => "story_completion",
            TaskKind::QuestionAnswering => "question_answering",
            TaskKind::Translation => "translation",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "summarization" => Some(TaskKind::Summarization),
            "story_completion" => Some(TaskKind::StoryCompletion),
            "question_answering" => Some(TaskKind::QuestionAnswering),
            "translation" => Some(TaskKind::Translation),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Datapoint {
    pub id: String,
    pub context: String,
    pub reference: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wrong_ending: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub task: TaskKind,
    /// `(source, target)` language tags, for translation corpora.
    pub language_pair: Option<(String, String)>,
    pub datapoints: Vec<Datapoint>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.datapoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datapoints.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.datapoints.iter().map(|d| d.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub avg_chars: f64,
    pub avg_words: f64,
    pub avg_sentences: f64,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}` not allowed for task {task}")]
    UnexpectedField {
        line: usize,
        field: &'static str,
        task: TaskKind,
    },
    #[error("line {line}: empty reference")]
    EmptyReference { line: usize },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record task `{found}` does not match requested task `{expected}`")]
    TaskMismatch {
        line: usize,
        expected: TaskKind,
        found: String,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("subset size {n} exceeds corpus size {available}")]
    SubsetTooLarge { n: usize, available: usize },
    #[error("subset size must be at least 1")]
    ZeroSubset,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    task: Option<String>,
    context: Option<String>,
    reference: Option<String>,
    wrong_ending: Option<String>,
}

/// Loads and validates a JSONL corpus. Records keep file order.
pub fn load_corpus(path: &Path, task: TaskKind) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path)?;
    load_corpus_from_str(&text, task)
}

pub fn load_corpus_from_str(text: &str, task: TaskKind) -> Result<Corpus, CorpusError> {
    let mut datapoints = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord =
            serde_json::from_str(raw_line).map_err(|e| CorpusError::MalformedLine {
                line,
                message: e.to_string(),
            })?;
        let id = rec
            .id
            .filter(|s| !s.is_empty())
            .ok_or(CorpusError::MissingField { line, field: "id" })?;
        let rec_task = rec.task.ok_or(CorpusError::MissingField {
            line,
            field: "task",
        })?;
        if TaskKind::parse(&rec_task) != Some(task) {
            return Err(CorpusError::TaskMismatch {
                line,
                expected: task,
                found: rec_task,
            });
        }
        let context = rec.context.ok_or(CorpusError::MissingField {
            line,
            field: "context",
        })?;
        let reference = rec.reference.ok_or(CorpusError::MissingField {
            line,
            field: "reference",
        })?;
        if reference.trim().is_empty() {
            return Err(CorpusError::EmptyReference { line });
        }
        let wrong_ending = match (task, rec.wrong_ending) {
            (TaskKind::StoryCompletion, Some(w)) => Some(w),
            (TaskKind::StoryCompletion, None) => {
                return Err(CorpusError::MissingField {
                    line,
                    field: "wrong_ending",
                })
            }
            (_, Some(_)) => {
                return Err(CorpusError::UnexpectedField {
                    line,
                    field: "wrong_ending",
                    task,
                })
            }
            (_, None) => None,
        };
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { line, id });
        }
        datapoints.push(Datapoint {
            id,
            context,
            reference,
            wrong_ending,
        });
    }
    if datapoints.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Corpus {
        task,
        language_pair: None,
        datapoints,
    })
}

/// Writes a corpus back to the external JSONL schema.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for dp in &corpus.datapoints {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), dp.id.clone().into());
        obj.insert("task".into(), corpus.task.as_str().into());
        obj.insert("context".into(), dp.context.clone().into());
        obj.insert("reference".into(), dp.reference.clone().into());
        if let Some(w) = &dp.wrong_ending {
            obj.insert("wrong_ending".into(), w.clone().into());
        }
        writeln!(out, "{}", serde_json::Value::Object(obj)).expect("write to vec");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Deterministic subset of `n` datapoints. Indices are sampled by a seeded
/// partial shuffle and then sorted, so the output preserves the original
/// relative order and is a pure function of `(corpus, n, seed)`.
pub fn select_subset(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if n == 0 {
        return Err(CorpusError::ZeroSubset);
    }
    if n > corpus.len() {
        return Err(CorpusError::SubsetTooLarge {
            n,
            available: corpus.len(),
        });
    }
    let mut rng = Stream::derive(seed, "corpus.select_subset", "");
    let picked = rng.choose_indices(corpus.len(), n);
    Ok(Corpus {
        task: corpus.task,
        language_pair: corpus.language_pair.clone(),
        datapoints: picked
            .into_iter()
            .map(|i| corpus.datapoints[i].clone())
            .collect(),
    })
}

/// Drops datapoints whose reference has fewer than `min_chars` grapheme
/// clusters. Applied before subset sampling when configured.
pub fn filter_min_reference_chars(corpus: &Corpus, min_chars: usize) -> Corpus {
    Corpus {
        task: corpus.task,
        language_pair: corpus.language_pair.clone(),
        datapoints: corpus
            .datapoints
            .iter()
            .filter(|d| grapheme_count(&d.reference) >= min_chars)
            .cloned()
            .collect(),
    }
}

/// Collapses whitespace runs to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn grapheme_count(text: &str) -> usize {
    text.graphemes(true).count()
}

/// True when the grapheme cluster contains a Unicode letter or digit.
pub fn is_alnum_cluster(cluster: &str) -> bool {
    cluster.chars().any(|c| c.is_alphanumeric())
}

const ABBREVIATIONS: &[&str] = &[
    "Dr.", "Mr.", "Mrs.", "Ms.", "St.", "e.g.", "i.e.", "etc.", "vs.", "Fig.", "No.",
];

/// Splits text into sentences. Joining the result with single spaces
/// reproduces the whitespace-normalized input.
pub fn split_sentences(text: &str) -> Vec<String> {
    let norm = normalize_whitespace(text);
    if norm.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = norm.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let at_end = i + 1 == chars.len();
        if matches!(c, '.' | '!' | '?') && (at_end || chars[i + 1] == ' ') {
            let candidate: String = chars[start..=i].iter().collect();
            let guarded = c == '.' && {
                let token = candidate.rsplit(' ').next().unwrap_or(&candidate);
                ABBREVIATIONS.contains(&token)
            };
            if !guarded {
                sentences.push(candidate);
                start = i + 2; // skip the separating space
                i += 2;
                continue;
            }
        }
        i += 1;
    }
    if start < chars.len() {
        sentences.push(chars[start..].iter().collect());
    }
    sentences
}

/// Splits on whitespace; punctuation stays attached to its word.
pub fn tokenize_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Mean character, word, and sentence counts over references.
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = corpus.len() as f64;
    let mut chars = 0.0;
    let mut words = 0.0;
    let mut sentences = 0.0;
    for dp in &corpus.datapoints {
        chars += grapheme_count(&dp.reference) as f64;
        words += tokenize_words(&dp.reference).len() as f64;
        sentences += split_sentences(&dp.reference).len() as f64;
    }
    Ok(CorpusStats {
        avg_chars: chars / n,
        avg_words: words / n,
        avg_sentences: sentences / n,
    })
}

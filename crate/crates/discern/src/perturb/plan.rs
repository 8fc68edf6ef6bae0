//! Declarative perturbation plans.
//!
//! A plan lists the perturbation types applied to one task's corpus. Each
//! spec names a content level (character / word / sentence), a method
//! (seeded rule or LLM rewrite), a degree (minor / major, or none where a
//! task defines no split), a kind, and for sized rule transforms a
//! magnitude `k`. Plans are JSON documents; the built-in plans carry the
//! default magnitudes for the six reference dataset shapes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Character,
    Word,
    Sentence,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Character => "character",
            Level::Word => "word",
            Level::Sentence => "sentence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rule,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degree {
    Minor,
    Major,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    DeleteChars,
    Typos,
    DeleteWordSpan,
    ShuffleSentences,
    RandomEnding,
    WrongEnding,
    RandomAnswer,
    FictionalEntities,
    GrammaticalErrors,
    RewriteInsert,
}

impl Kind {
    pub fn is_rule(&self) -> bool {
        matches!(
            self,
            Kind::DeleteChars
                | Kind::Typos
                | Kind::DeleteWordSpan
                | Kind::ShuffleSentences
                | Kind::RandomEnding
                | Kind::WrongEnding
                | Kind::RandomAnswer
        )
    }

    /// Rule kinds that require a magnitude `k`.
    pub fn needs_k(&self) -> bool {
        matches!(
            self,
            Kind::DeleteChars | Kind::Typos | Kind::DeleteWordSpan | Kind::ShuffleSentences
        )
    }
}

/// Magnitude of a sized rule transform: a positive count, or `"all"`
/// (full-shuffle reordering).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Magnitude {
    Count(u32),
    #[serde(with = "all_literal")]
    All,
}

mod all_literal {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("all")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "all" {
            Ok(())
        } else {
            Err(de::Error::custom("expected the string \"all\""))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub pid: String,
    pub level: Level,
    pub method: Method,
    pub degree: Degree,
    pub kind: Kind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Magnitude>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub task: TaskKind,
    pub specs: Vec<PerturbationSpec>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("io error reading plan: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed plan: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("spec `{pid}`: duplicate pid")]
    DuplicatePid { pid: String },
    #[error("spec `{pid}`: pid `original` is reserved")]
    ReservedPid { pid: String },
    #[error("spec `{pid}`: kind {kind:?} cannot use method {method:?}")]
    MethodKindMismatch {
        pid: String,
        kind: Kind,
        method: Method,
    },
    #[error("spec `{pid}`: llm specs require a template_id")]
    MissingTemplateId { pid: String },
    #[error("spec `{pid}`: kind {kind:?} requires a magnitude k")]
    MissingK { pid: String, kind: Kind },
    #[error("spec `{pid}`: k must be positive")]
    ZeroK { pid: String },
    #[error("spec `{pid}`: degree `none` is not allowed where a minor/major split is defined for {kind:?} on {task}")]
    DegreeRequired {
        pid: String,
        kind: Kind,
        task: TaskKind,
    },
    #[error("no built-in plan named `{0}`")]
    UnknownBuiltin(String),
}

/// Whether the reference magnitudes define a minor/major split for this
/// task and kind. Where they do, `degree: none` is rejected.
pub fn has_degree_split(task: TaskKind, kind: Kind) -> bool {
    use Kind::*;
    use TaskKind::*;
    match (task, kind) {
        (Summarization, DeleteChars | Typos | FictionalEntities | GrammaticalErrors) => true,
        (Summarization, ShuffleSentences | RewriteInsert) => true,
        (StoryCompletion, _) => false,
        (QuestionAnswering, DeleteChars | Typos | FictionalEntities | GrammaticalErrors) => true,
        (QuestionAnswering, _) => false,
        (Translation, DeleteChars | Typos | DeleteWordSpan) => true,
        (Translation, _) => false,
        _ => false,
    }
}

impl PerturbationPlan {
    /// An empty spec list is allowed here (it yields only the original
    /// variant); aggregation is where empty plans are rejected.
    pub fn validate(&self) -> Result<(), PlanError> {
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.specs {
            if spec.pid == "original" {
                return Err(PlanError::ReservedPid {
                    pid: spec.pid.clone(),
                });
            }
            if !seen.insert(spec.pid.clone()) {
                return Err(PlanError::DuplicatePid {
                    pid: spec.pid.clone(),
                });
            }
            let rule_kind = spec.kind.is_rule();
            match spec.method {
                Method::Rule if !rule_kind => {
                    return Err(PlanError::MethodKindMismatch {
                        pid: spec.pid.clone(),
                        kind: spec.kind,
                        method: spec.method,
                    })
                }
                Method::Llm if rule_kind => {
                    return Err(PlanError::MethodKindMismatch {
                        pid: spec.pid.clone(),
                        kind: spec.kind,
                        method: spec.method,
                    })
                }
                _ => {}
            }
            if spec.method == Method::Llm && spec.template_id.is_none() {
                return Err(PlanError::MissingTemplateId {
                    pid: spec.pid.clone(),
                });
            }
            if spec.method == Method::Rule && spec.kind.needs_k() {
                match spec.k {
                    None => {
                        return Err(PlanError::MissingK {
                            pid: spec.pid.clone(),
                            kind: spec.kind,
                        })
                    }
                    Some(Magnitude::Count(0)) => {
                        return Err(PlanError::ZeroK {
                            pid: spec.pid.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
            if spec.degree == Degree::None && has_degree_split(self.task, spec.kind) {
                return Err(PlanError::DegreeRequired {
                    pid: spec.pid.clone(),
                    kind: spec.kind,
                    task: self.task,
                });
            }
        }
        Ok(())
    }

    pub fn pids(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.pid.clone()).collect()
    }

    pub fn spec(&self, pid: &str) -> Option<&PerturbationSpec> {
        self.specs.iter().find(|s| s.pid == pid)
    }

    pub fn has_llm_specs(&self) -> bool {
        self.specs.iter().any(|s| s.method == Method::Llm)
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let plan: PerturbationPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PlanError> {
        let text = std::fs::read_to_string(path)?;
        PerturbationPlan::from_json(&text)
    }

    /// Resolves `name` against the built-in plan set, falling back to a
    /// filesystem path.
    pub fn resolve(name: &str) -> Result<Self, PlanError> {
        if let Some(text) = builtin_plan_json(name) {
            return PerturbationPlan::from_json(text);
        }
        let path = std::path::Path::new(name);
        if path.exists() {
            return PerturbationPlan::load(path);
        }
        Err(PlanError::UnknownBuiltin(name.to_string()))
    }
}

/// Raw JSON for a built-in plan, if `name` matches one.
pub fn builtin_plan_json(name: &str) -> Option<&'static str> {
    match name {
        "summeval" => Some(include_str!("../../plans/summeval.json")),
        "sumpubmed" => Some(include_str!("../../plans/sumpubmed.json")),
        "storycloze" => Some(include_str!("../../plans/storycloze.json")),
        "answer_eq" => Some(include_str!("../../plans/answer_eq.json")),
        "wmt22_de_en" => Some(include_str!("../../plans/wmt22_de_en.json")),
        "wmt22_zh_en" => Some(include_str!("../../plans/wmt22_zh_en.json")),
        "mini" => Some(include_str!("../../plans/mini.json")),
        _ => None,
    }
}

pub const BUILTIN_PLAN_NAMES: &[&str] = &[
    "summeval",
    "sumpubmed",
    "storycloze",
    "answer_eq",
    "wmt22_de_en",
    "wmt22_zh_en",
    "mini",
];

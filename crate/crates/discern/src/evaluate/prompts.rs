//! Built-in prompt templates and the lookup store.
//!
//! Evaluation templates are keyed `"{task}.{metric}"`; perturbation
//! templates are keyed `"{task}.{kind}"` with an optional `.minor`/`.major`
//! suffix. All built-ins ship as plain-text files in the crate's `prompts/`
//! directory and are embedded at build time. A store configured with a
//! directory prefers same-named `.txt` files from it, so any template can
//! be overridden without rebuilding.

use std::path::PathBuf;

use super::{EvalError, PromptTemplate};
use crate::corpus::TaskKind;

macro_rules! builtin {
    ($($id:literal),+ $(,)?) => {
        &[$(($id, include_str!(concat!("../../prompts/", $id, ".txt")))),+]
    };
}

const BUILTIN_TEMPLATES: &[(&str, &str)] = builtin![
    "summarization.coherence",
    "summarization.consistency",
    "summarization.fluency",
    "summarization.relevance",
    "story_completion.coherence",
    "story_completion.consistency",
    "story_completion.fluency",
    "question_answering.answer_quality",
    "translation.accuracy",
    "translation.fluency",
    "summarization.fictional_entities.minor",
    "summarization.fictional_entities.major",
    "summarization.grammatical_errors.minor",
    "summarization.grammatical_errors.major",
    "summarization.rewrite_insert.minor",
    "summarization.rewrite_insert.major",
    "story_completion.fictional_entities",
    "story_completion.grammatical_errors",
    "question_answering.fictional_entities.minor",
    "question_answering.fictional_entities.major",
    "question_answering.grammatical_errors.minor",
    "question_answering.grammatical_errors.major",
    "translation.fictional_entities",
    "translation.grammatical_errors",
];

/// All metric scales are 1-5.
pub const SCALE_MIN: f64 = 1.0;
pub const SCALE_MAX: f64 = 5.0;

/// Template source with optional directory override.
#[derive(Debug, Clone, Default)]
pub struct TemplateStore {
    override_dir: Option<PathBuf>,
}

impl TemplateStore {
    pub fn builtin() -> Self {
        TemplateStore { override_dir: None }
    }

    pub fn with_dir(dir: PathBuf) -> Self {
        TemplateStore {
            override_dir: Some(dir),
        }
    }

    fn body(&self, template_id: &str) -> Result<String, EvalError> {
        if let Some(dir) = &self.override_dir {
            let path = dir.join(format!("{template_id}.txt"));
            if path.exists() {
                return std::fs::read_to_string(&path).map_err(|e| EvalError::TemplateIo {
                    template_id: template_id.to_string(),
                    message: e.to_string(),
                });
            }
        }
        BUILTIN_TEMPLATES
            .iter()
            .find(|(id, _)| *id == template_id)
            .map(|(_, body)| body.to_string())
            .ok_or_else(|| EvalError::UnknownTemplate(template_id.to_string()))
    }

    /// Scoring template for one metric of a task.
    pub fn evaluation(&self, task: TaskKind, metric: &str) -> Result<PromptTemplate, EvalError> {
        let template_id = format!("{}.{metric}", task.as_str());
        PromptTemplate::new(
            template_id.clone(),
            self.body(&template_id)?,
            metric.to_string(),
            SCALE_MIN,
            SCALE_MAX,
        )
    }

    /// Rewrite template for an LLM perturbation spec.
    pub fn perturbation(&self, template_id: &str) -> Result<PromptTemplate, EvalError> {
        PromptTemplate::new(
            template_id.to_string(),
            self.body(template_id)?,
            "perturbation".to_string(),
            SCALE_MIN,
            SCALE_MAX,
        )
    }
}

/// Placeholder receiving the datapoint's context for a task.
pub fn context_placeholder(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Summarization => "ARTICLE_HERE",
        TaskKind::StoryCompletion => "STORY_HERE",
        TaskKind::QuestionAnswering => "QUESTION_HERE",
        TaskKind::Translation => "SOURCE_HERE",
    }
}

/// Placeholder receiving the text under evaluation (the variant text).
pub fn evaluated_placeholder(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Summarization => "SUMMARY_HERE",
        TaskKind::StoryCompletion => "ENDING_HERE",
        TaskKind::QuestionAnswering => "ANSWER_HERE",
        TaskKind::Translation => "TRANSLATION_HERE",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_template_parses() {
        let store = TemplateStore::builtin();
        for task in [
            TaskKind::Summarization,
            TaskKind::StoryCompletion,
            TaskKind::QuestionAnswering,
            TaskKind::Translation,
        ] {
            for metric in task.metrics() {
                let t = store.evaluation(task, metric).unwrap();
                assert!(
                    t.body.contains(context_placeholder(task)),
                    "{}",
                    t.template_id
                );
                assert!(
                    t.body.contains(evaluated_placeholder(task)),
                    "{}",
                    t.template_id
                );
            }
        }
    }

    #[test]
    fn perturbation_templates_have_single_subject_slot() {
        let store = TemplateStore::builtin();
        for (id, _) in BUILTIN_TEMPLATES.iter().filter(|(id, _)| {
            id.contains("fictional") || id.contains("grammatical") || id.contains("rewrite")
        }) {
            let t = store.perturbation(id).unwrap();
            assert_eq!(t.placeholders().len(), 1, "{id}");
        }
    }

    #[test]
    fn rendered_rewrite_prompt_has_no_residual_placeholder() {
        let store = TemplateStore::builtin();
        let t = store
            .perturbation("summarization.fictional_entities.minor")
            .unwrap();
        let mut fields = std::collections::BTreeMap::new();
        fields.insert("SUMMARY_HERE", "A short summary.");
        let prompt = crate::evaluate::render_prompt(&t, &fields).unwrap();
        assert!(!prompt.contains("_HERE"));
        assert!(prompt.contains("A short summary."));
        assert!(prompt.trim_end().ends_with("Revised Summary:"));
        assert!(prompt.contains("substitute only one critical named entity"));
    }

    #[test]
    fn unknown_template_is_an_error() {
        let store = TemplateStore::builtin();
        assert!(matches!(
            store.perturbation("no.such.template"),
            Err(EvalError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn override_dir_takes_precedence() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("summarization.coherence.txt"),
            "Custom: SUMMARY_HERE",
        )
        .unwrap();
        let store = TemplateStore::with_dir(dir.path().to_path_buf());
        let t = store
            .evaluation(TaskKind::Summarization, "coherence")
            .unwrap();
        assert_eq!(t.body, "Custom: SUMMARY_HERE");
        // other templates still come from the built-ins
        let u = store
            .evaluation(TaskKind::Summarization, "fluency")
            .unwrap();
        assert!(u.body.len() > 100);
    }
}

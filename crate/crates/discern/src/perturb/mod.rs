//! Perturbed variant corpora.
//!
//! `apply_plan` turns one corpus into `P + 1` variant corpora: the
//! unmodified `original` plus one per plan spec. Rule specs run the seeded
//! transforms from [`rules`]; LLM specs render a rewrite template per
//! datapoint and send it through the provider. A datapoint that cannot be
//! perturbed (too little material, a provider failure, or a transform that
//! returned the input unchanged) lands in the variant's `excluded` set with
//! a warning; a failure never aborts the run.

pub mod plan;
pub mod rules;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plan::{
    Degree, Kind, Level, Magnitude, Method, PerturbationPlan, PerturbationSpec, PlanError,
};
pub use rules::RuleError;

use crate::corpus::{Corpus, TaskKind};
use crate::evaluate::{render_prompt, EvalError, PromptTemplate, TemplateStore};
use crate::provider::{ChatRequest, Provider};
use crate::rng::Stream;

/// Texts of one variant: pid `original` or a plan spec's pid. The ids of
/// `texts` and `excluded` are disjoint and together cover the source
/// corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantCorpus {
    pub pid: String,
    pub texts: BTreeMap<String, String>,
    pub excluded: BTreeSet<String>,
}

impl VariantCorpus {
    pub fn original(corpus: &Corpus) -> Self {
        VariantCorpus {
            pid: "original".to_string(),
            texts: corpus
                .datapoints
                .iter()
                .map(|d| (d.id.clone(), d.reference.clone()))
                .collect(),
            excluded: BTreeSet::new(),
        }
    }

    /// Checks the partition invariant against the source corpus.
    pub fn covers(&self, corpus: &Corpus) -> bool {
        if self.texts.len() + self.excluded.len() != corpus.len() {
            return false;
        }
        corpus
            .datapoints
            .iter()
            .all(|d| self.texts.contains_key(&d.id) != self.excluded.contains(&d.id))
    }
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("plan task {plan} does not match corpus task {corpus}")]
    TaskMismatch { plan: TaskKind, corpus: TaskKind },
    #[error("plan contains llm specs but no perturbation provider was supplied")]
    ProviderRequired,
    #[error("template error: {0}")]
    Template(#[from] EvalError),
}

/// Applies every spec of the plan. Returns the variants (original first,
/// then plan order) and the warnings accumulated across datapoints.
pub fn apply_plan(
    corpus: &Corpus,
    plan: &PerturbationPlan,
    seed: u64,
    provider: Option<&Provider>,
    templates: &TemplateStore,
) -> Result<(Vec<VariantCorpus>, Vec<String>), PerturbError> {
    if plan.task != corpus.task {
        return Err(PerturbError::TaskMismatch {
            plan: plan.task,
            corpus: corpus.task,
        });
    }
    if plan.has_llm_specs() && provider.is_none() {
        return Err(PerturbError::ProviderRequired);
    }

    let mut variants = vec![VariantCorpus::original(corpus)];
    let mut warnings = Vec::new();

    for spec in &plan.specs {
        let template = match spec.method {
            Method::Llm => Some(
                templates.perturbation(spec.template_id.as_deref().expect("validated llm spec"))?,
            ),
            Method::Rule => None,
        };

        let indexed: Vec<usize> = (0..corpus.len()).collect();
        let outcomes: Vec<Result<String, String>> = crate::exec::map(&indexed, |&idx| {
            let dp = &corpus.datapoints[idx];
            let produced = match spec.method {
                Method::Rule => {
                    let mut rng = Stream::derive(seed, &spec.pid, &dp.id);
                    apply_rule(spec, idx, corpus, &mut rng).map_err(|e| e.to_string())
                }
                Method::Llm => llm_perturb(
                    &dp.reference,
                    spec,
                    template.as_ref().expect("template for llm spec"),
                    provider.expect("provider for llm spec"),
                    &dp.id,
                )
                .map_err(|e| e.to_string()),
            };
            match produced {
                Ok(text) if text == dp.reference => {
                    Err("no change produced (output equals input)".to_string())
                }
                other => other,
            }
        });

        let mut variant = VariantCorpus {
            pid: spec.pid.clone(),
            texts: BTreeMap::new(),
            excluded: BTreeSet::new(),
        };
        for (idx, outcome) in outcomes.into_iter().enumerate() {
            let dp = &corpus.datapoints[idx];
            match outcome {
                Ok(text) => {
                    variant.texts.insert(dp.id.clone(), text);
                }
                Err(reason) => {
                    warnings.push(format!(
                        "perturb `{}` excluded datapoint `{}`: {reason}",
                        spec.pid, dp.id
                    ));
                    variant.excluded.insert(dp.id.clone());
                }
            }
        }
        variants.push(variant);
    }

    Ok((variants, warnings))
}

fn apply_rule(
    spec: &PerturbationSpec,
    dp_index: usize,
    corpus: &Corpus,
    rng: &mut Stream,
) -> Result<String, RuleError> {
    let dp = &corpus.datapoints[dp_index];
    let count = |spec: &PerturbationSpec| -> usize {
        match spec.k {
            Some(Magnitude::Count(k)) => k as usize,
            _ => 0,
        }
    };
    match spec.kind {
        Kind::DeleteChars => rules::delete_random_chars(&dp.reference, count(spec), rng),
        Kind::Typos => rules::inject_typos(&dp.reference, count(spec), rng),
        Kind::DeleteWordSpan => rules::delete_word_span(&dp.reference, count(spec), rng),
        Kind::ShuffleSentences => {
            rules::shuffle_sentences(&dp.reference, spec.k.expect("validated k"), rng)
        }
        Kind::RandomEnding | Kind::RandomAnswer => {
            rules::substitute_reference_random(dp_index, corpus, rng)
        }
        Kind::WrongEnding => rules::substitute_ending_wrong(dp),
        Kind::FictionalEntities | Kind::GrammaticalErrors | Kind::RewriteInsert => {
            unreachable!("llm kinds dispatch to llm_perturb")
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmPerturbError {
    #[error("render failed: {0}")]
    Render(#[from] EvalError),
    #[error("provider failure after retry: {0}")]
    ProviderFailure(String),
    #[error("no change produced after retry")]
    NoChangeProduced,
}

/// Sends one rewrite request and cleans the revised text. A response that
/// is empty or identical to the input is retried once under a distinct
/// cache tag, then reported as `NoChangeProduced`.
pub fn llm_perturb(
    text: &str,
    spec: &PerturbationSpec,
    template: &PromptTemplate,
    provider: &Provider,
    datapoint_id: &str,
) -> Result<String, LlmPerturbError> {
    // construction guarantees at least one placeholder
    let placeholder = template.placeholders()[0];
    let mut fields = BTreeMap::new();
    fields.insert(placeholder, text);
    let prompt = render_prompt(template, &fields)?;

    let mut last_error = None;
    for attempt in 0..2 {
        let req = ChatRequest {
            model: provider.model_name().to_string(),
            system: None,
            user: prompt.clone(),
            temperature: 0.0,
            tag: format!("perturb;pid={};id={datapoint_id};try={attempt}", spec.pid),
        };
        match provider.complete(&req) {
            Ok(resp) => {
                let cleaned = clean_revision(&resp.text);
                if !cleaned.is_empty() && cleaned != text {
                    return Ok(cleaned);
                }
            }
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    match last_error {
        Some(e) => Err(LlmPerturbError::ProviderFailure(e)),
        None => Err(LlmPerturbError::NoChangeProduced),
    }
}

/// Strips surrounding whitespace, a leading `Revised ...:` label, and one
/// pair of matching surrounding quotes.
fn clean_revision(text: &str) -> String {
    let mut out = text.trim();
    let lowered = out.to_ascii_lowercase();
    if lowered.starts_with("revised") {
        if let Some(colon) = out.find(':') {
            out = out[colon + 1..].trim_start();
        }
    }
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')] {
        if out.len() >= 2 && out.starts_with(open) && out.ends_with(close) {
            out = out[open.len_utf8()..out.len() - close.len_utf8()].trim();
            break;
        }
    }
    out.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Datapoint;
    use crate::provider::MockConfig;

    fn corpus(task: TaskKind, n: usize) -> Corpus {
        Corpus {
            task,
            language_pair: None,
            datapoints: (0..n)
                .map(|i| Datapoint {
                    id: format!("d{i}"),
                    context: format!("Context text number {i}."),
                    reference: format!(
                        "Reference number {i} has several words. It also has two sentences."
                    ),
                    wrong_ending: (task == TaskKind::StoryCompletion)
                        .then(|| format!("Wrong ending {i}.")),
                })
                .collect(),
        }
    }

    fn rule_plan(task: TaskKind, kind: Kind, k: Option<Magnitude>) -> PerturbationPlan {
        PerturbationPlan {
            task,
            specs: vec![PerturbationSpec {
                pid: "p1".into(),
                level: Level::Character,
                method: Method::Rule,
                degree: Degree::Minor,
                kind,
                k,
                template_id: None,
            }],
        }
    }

    #[test]
    fn empty_plan_yields_only_original() {
        let c = corpus(TaskKind::Summarization, 3);
        let plan = PerturbationPlan {
            task: TaskKind::Summarization,
            specs: vec![],
        };
        let (variants, warnings) =
            apply_plan(&c, &plan, 0, None, &TemplateStore::builtin()).unwrap();
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0].pid, "original");
        assert!(warnings.is_empty());
        assert!(variants[0].covers(&c));
        assert_eq!(variants[0].texts["d0"], c.datapoints[0].reference);
    }

    #[test]
    fn rule_plan_is_deterministic() {
        let c = corpus(TaskKind::Summarization, 8);
        let plan = rule_plan(
            TaskKind::Summarization,
            Kind::DeleteChars,
            Some(Magnitude::Count(4)),
        );
        let run = || {
            let (v, _) = apply_plan(&c, &plan, 7, None, &TemplateStore::builtin()).unwrap();
            v.iter().map(|x| x.texts.clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn different_seeds_differ() {
        let c = corpus(TaskKind::Summarization, 8);
        let plan = rule_plan(
            TaskKind::Summarization,
            Kind::DeleteChars,
            Some(Magnitude::Count(4)),
        );
        let (a, _) = apply_plan(&c, &plan, 1, None, &TemplateStore::builtin()).unwrap();
        let (b, _) = apply_plan(&c, &plan, 2, None, &TemplateStore::builtin()).unwrap();
        assert_ne!(a[1].texts, b[1].texts);
    }

    #[test]
    fn task_mismatch_rejected() {
        let c = corpus(TaskKind::Translation, 2);
        let plan = rule_plan(
            TaskKind::Summarization,
            Kind::DeleteChars,
            Some(Magnitude::Count(1)),
        );
        assert!(matches!(
            apply_plan(&c, &plan, 0, None, &TemplateStore::builtin()),
            Err(PerturbError::TaskMismatch { .. })
        ));
    }

    #[test]
    fn llm_plan_without_provider_rejected() {
        let c = corpus(TaskKind::Summarization, 2);
        let plan = PerturbationPlan {
            task: TaskKind::Summarization,
            specs: vec![PerturbationSpec {
                pid: "w1".into(),
                level: Level::Word,
                method: Method::Llm,
                degree: Degree::Minor,
                kind: Kind::FictionalEntities,
                k: None,
                template_id: Some("summarization.fictional_entities.minor".into()),
            }],
        };
        assert!(matches!(
            apply_plan(&c, &plan, 0, None, &TemplateStore::builtin()),
            Err(PerturbError::ProviderRequired)
        ));
    }

    #[test]
    fn insufficient_material_goes_to_excluded_not_abort() {
        let mut c = corpus(TaskKind::Summarization, 3);
        c.datapoints[1].reference = "ab.".to_string();
        let plan = rule_plan(
            TaskKind::Summarization,
            Kind::DeleteChars,
            Some(Magnitude::Count(10)),
        );
        let (variants, warnings) =
            apply_plan(&c, &plan, 0, None, &TemplateStore::builtin()).unwrap();
        let v = &variants[1];
        assert!(v.excluded.contains("d1"));
        assert!(v.texts.contains_key("d0"));
        assert!(v.covers(&c));
        assert!(warnings.iter().any(|w| w.contains("d1")));
    }

    #[test]
    fn exclusion_bookkeeping_is_constant_across_variants() {
        let c = corpus(TaskKind::StoryCompletion, 5);
        let plan = PerturbationPlan::resolve("storycloze").unwrap();
        let plan = PerturbationPlan {
            task: plan.task,
            specs: plan
                .specs
                .into_iter()
                .filter(|s| s.method == Method::Rule)
                .collect(),
        };
        let (variants, _) = apply_plan(&c, &plan, 3, None, &TemplateStore::builtin()).unwrap();
        for v in &variants {
            assert_eq!(v.texts.len() + v.excluded.len(), c.len(), "pid {}", v.pid);
            assert!(v.covers(&c));
        }
    }

    #[test]
    fn non_identity_everywhere() {
        let c = corpus(TaskKind::Summarization, 6);
        for (kind, k) in [
            (Kind::DeleteChars, Some(Magnitude::Count(3))),
            (Kind::Typos, Some(Magnitude::Count(2))),
            (Kind::ShuffleSentences, Some(Magnitude::Count(2))),
        ] {
            let plan = rule_plan(TaskKind::Summarization, kind, k);
            let (variants, _) = apply_plan(&c, &plan, 5, None, &TemplateStore::builtin()).unwrap();
            for (id, text) in &variants[1].texts {
                let original = &c.datapoints[id[1..].parse::<usize>().unwrap()].reference;
                assert_ne!(text, original, "{kind:?} left `{id}` unchanged");
            }
        }
    }

    #[test]
    fn identical_swapped_sentences_are_excluded_as_no_change() {
        let mut c = corpus(TaskKind::Summarization, 1);
        c.datapoints[0].reference = "Same phrase. Same phrase.".to_string();
        let plan = rule_plan(
            TaskKind::Summarization,
            Kind::ShuffleSentences,
            Some(Magnitude::Count(2)),
        );
        let (variants, warnings) =
            apply_plan(&c, &plan, 0, None, &TemplateStore::builtin()).unwrap();
        assert!(variants[1].excluded.contains("d0"));
        assert!(warnings[0].contains("no change"));
    }

    #[test]
    fn mock_llm_spec_marks_texts() {
        let c = corpus(TaskKind::Summarization, 3);
        let plan = PerturbationPlan {
            task: TaskKind::Summarization,
            specs: vec![PerturbationSpec {
                pid: "w1".into(),
                level: Level::Word,
                method: Method::Llm,
                degree: Degree::Minor,
                kind: Kind::FictionalEntities,
                k: None,
                template_id: Some("summarization.fictional_entities.minor".into()),
            }],
        };
        let provider = Provider::mock(MockConfig::perturber(0));
        let (variants, warnings) =
            apply_plan(&c, &plan, 0, Some(&provider), &TemplateStore::builtin()).unwrap();
        assert!(warnings.is_empty());
        for (id, text) in &variants[1].texts {
            assert!(
                text.contains(crate::provider::DEFAULT_MARKER),
                "{id}: {text}"
            );
            assert_ne!(
                text,
                &c.datapoints[id[1..].parse::<usize>().unwrap()].reference
            );
        }
    }

    #[test]
    fn clean_revision_strips_labels_and_quotes() {
        assert_eq!(clean_revision("  \"hello there\"  "), "hello there");
        assert_eq!(
            clean_revision("Revised Summary: better text"),
            "better text"
        );
        assert_eq!(
            clean_revision("Revised Translation:\n\"quoted output\""),
            "quoted output"
        );
        assert_eq!(clean_revision("plain"), "plain");
    }
}

//! Stage orchestration: load -> subset -> perturb -> score -> stats ->
//! report, with perturb and score artifacts persisted under
//! `<output_dir>/stages/` keyed by content fingerprints. Re-running with an
//! unchanged config reuses the artifacts, so stats options can be explored
//! without re-scoring and warm re-runs make no provider calls.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::output;
use super::{
    assemble_report, canonical_hash, BenchmarkReport, CellSummary, ModelEntry, ModelReport,
    RunConfig, RunError,
};
use crate::corpus::{filter_min_reference_chars, load_corpus_from_str, select_subset, Corpus};
use crate::evaluate::{
    average_repeats, score_variant, EvalError, ScoreCell, ScoreMatrix, ScoreSet, TemplateStore,
};
use crate::perturb::{apply_plan, PerturbationPlan, VariantCorpus};
use crate::provider::{MockConfig, MockMode, Provider};
use crate::rng::stream_seed;
use crate::stats::{
    aggregate_discernment, level_weights, wilcoxon_enumeration_oracle, wilcoxon_one_sided,
    ExpertWeights, PValueGrid, PValueRow, PairedScores,
};

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::VariantUnusable { .. } => RunError::Provider(e.to_string()),
            EvalError::Provider(p) => RunError::Provider(p.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

/// Bundled mini corpora, addressable as `builtin:<name>` dataset paths.
pub fn builtin_dataset(name: &str) -> Option<&'static str> {
    match name {
        "mini_translation" => Some(include_str!("../../data/mini_translation.jsonl")),
        "mini_story" => Some(include_str!("../../data/mini_story.jsonl")),
        "mini_summarization" => Some(include_str!("../../data/mini_summarization.jsonl")),
        "mini_qa" => Some(include_str!("../../data/mini_qa.jsonl")),
        _ => None,
    }
}

fn dataset_text(config: &RunConfig) -> Result<String, RunError> {
    if let Some(name) = config.dataset.strip_prefix("builtin:") {
        return builtin_dataset(name)
            .map(str::to_string)
            .ok_or_else(|| RunError::Config(format!("no builtin dataset `{name}`")));
    }
    std::fs::read_to_string(&config.dataset)
        .map_err(|e| RunError::Config(format!("cannot read dataset `{}`: {e}", config.dataset)))
}

/// Loads the dataset, applies the optional minimum-length filter, and
/// draws the seeded subset of `n` datapoints.
pub fn load_run_corpus(config: &RunConfig) -> Result<Corpus, RunError> {
    let text = dataset_text(config)?;
    let mut corpus = load_corpus_from_str(&text, config.task)?;
    if let Some(min) = config.min_reference_chars {
        corpus = filter_min_reference_chars(&corpus, min);
        if corpus.is_empty() {
            return Err(RunError::Data(format!(
                "minimum reference length {min} filtered out every datapoint"
            )));
        }
    }
    Ok(select_subset(&corpus, config.n, config.seed)?)
}

pub fn resolve_plan(config: &RunConfig) -> Result<PerturbationPlan, RunError> {
    let plan = PerturbationPlan::resolve(&config.plan)?;
    if plan.task != config.task {
        return Err(RunError::Config(format!(
            "plan `{}` targets task {} but the config says {}",
            config.plan, plan.task, config.task
        )));
    }
    Ok(plan)
}

fn template_store(config: &RunConfig) -> TemplateStore {
    match &config.prompts_dir {
        Some(dir) => TemplateStore::with_dir(PathBuf::from(dir)),
        None => TemplateStore::builtin(),
    }
}

fn stages_dir(config: &RunConfig) -> PathBuf {
    PathBuf::from(&config.output_dir).join("stages")
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

fn variants_fingerprint(config: &RunConfig, dataset: &str, plan: &PerturbationPlan) -> String {
    let perturber = if config.offline {
        format!("mock:{}", config.mock.seed)
    } else {
        config
            .perturb_provider
            .as_ref()
            .map(|p| format!("{}@{}", p.model, p.base_url))
            .unwrap_or_else(|| "none".to_string())
    };
    canonical_hash(&serde_json::json!({
        "stage": "variants",
        "dataset": dataset,
        "task": config.task,
        "plan": plan,
        "seed": config.seed,
        "n": config.n,
        "min_reference_chars": config.min_reference_chars,
        "perturber": perturber,
        "prompts_dir": config.prompts_dir,
    }))
}

fn scores_fingerprint(config: &RunConfig, variants_fp: &str, model_name: &str) -> String {
    let scorer = if config.offline {
        serde_json::json!({"mock": config.mock, "name": model_name})
    } else {
        let entry = config.models.iter().find(|m| m.name == model_name);
        serde_json::json!({
            "name": model_name,
            "model": entry.map(|e| e.provider.model.clone()),
            "base_url": entry.map(|e| e.provider.base_url.clone()),
        })
    };
    canonical_hash(&serde_json::json!({
        "stage": "scores",
        "variants": variants_fp,
        "scorer": scorer,
        "repeats": config.repeats,
        "prompts_dir": config.prompts_dir,
    }))
}

// ---------------------------------------------------------------------
// stage artifact persistence

#[derive(serde::Serialize, Deserialize)]
struct VariantRow {
    id: String,
    pid: String,
    text: String,
    excluded: bool,
}

pub fn write_variants_jsonl(variants: &[VariantCorpus], path: &Path) -> Result<(), RunError> {
    let mut out = Vec::new();
    for v in variants {
        for (id, text) in &v.texts {
            let row = VariantRow {
                id: id.clone(),
                pid: v.pid.clone(),
                text: text.clone(),
                excluded: false,
            };
            writeln!(out, "{}", serde_json::to_string(&row).expect("row")).expect("vec write");
        }
        for id in &v.excluded {
            let row = VariantRow {
                id: id.clone(),
                pid: v.pid.clone(),
                text: String::new(),
                excluded: true,
            };
            writeln!(out, "{}", serde_json::to_string(&row).expect("row")).expect("vec write");
        }
    }
    write_atomic(path, &out)
}

pub fn read_variants_jsonl(
    path: &Path,
    corpus: &Corpus,
    plan: &PerturbationPlan,
) -> Result<Vec<VariantCorpus>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut by_pid: BTreeMap<String, VariantCorpus> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: VariantRow = serde_json::from_str(line)
            .map_err(|e| RunError::Data(format!("variants file {}: {e}", path.display())))?;
        let entry = by_pid
            .entry(row.pid.clone())
            .or_insert_with(|| VariantCorpus {
                pid: row.pid.clone(),
                texts: BTreeMap::new(),
                excluded: std::collections::BTreeSet::new(),
            });
        if row.excluded {
            entry.excluded.insert(row.id);
        } else {
            entry.texts.insert(row.id, row.text);
        }
    }
    let mut ordered = Vec::new();
    for pid in std::iter::once("original".to_string()).chain(plan.pids()) {
        let v = by_pid
            .remove(&pid)
            .ok_or_else(|| RunError::Data(format!("variants file missing pid `{pid}`")))?;
        if !v.covers(corpus) {
            return Err(RunError::Data(format!(
                "variants file does not cover the corpus for pid `{pid}`"
            )));
        }
        ordered.push(v);
    }
    Ok(ordered)
}

#[derive(serde::Serialize, Deserialize)]
struct ScoreRow {
    pid: String,
    metric: String,
    id: String,
    repeat: usize,
    raw_text: String,
    score: Option<f64>,
}

pub fn write_matrices_jsonl(matrices: &[ScoreMatrix], path: &Path) -> Result<(), RunError> {
    let mut out = Vec::new();
    for m in matrices {
        for (id, row) in m.ids.iter().zip(&m.rows) {
            for (repeat, cell) in row.iter().enumerate() {
                let row = ScoreRow {
                    pid: m.pid.clone(),
                    metric: m.metric.clone(),
                    id: id.clone(),
                    repeat,
                    raw_text: cell.raw_text.clone(),
                    score: cell.score,
                };
                writeln!(out, "{}", serde_json::to_string(&row).expect("row")).expect("vec write");
            }
        }
    }
    write_atomic(path, &out)
}

pub fn read_matrices_jsonl(path: &Path, corpus: &Corpus) -> Result<Vec<ScoreMatrix>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let index: BTreeMap<&str, usize> = corpus
        .datapoints
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    let mut cells: BTreeMap<(String, String), Vec<Vec<ScoreCell>>> = BTreeMap::new();
    let mut repeats = 1usize;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: ScoreRow = serde_json::from_str(line)
            .map_err(|e| RunError::Data(format!("scores file {}: {e}", path.display())))?;
        repeats = repeats.max(row.repeat + 1);
        let i = *index
            .get(row.id.as_str())
            .ok_or_else(|| RunError::Data(format!("scores file names unknown id `{}`", row.id)))?;
        let rows = cells
            .entry((row.pid.clone(), row.metric.clone()))
            .or_insert_with(|| vec![Vec::new(); corpus.len()]);
        if rows[i].len() <= row.repeat {
            rows[i].resize(
                row.repeat + 1,
                ScoreCell {
                    score: None,
                    raw_text: String::new(),
                },
            );
        }
        rows[i][row.repeat] = ScoreCell {
            score: row.score,
            raw_text: row.raw_text,
        };
    }
    Ok(cells
        .into_iter()
        .map(|((pid, metric), mut rows)| {
            for r in &mut rows {
                if r.len() < repeats {
                    r.resize(
                        repeats,
                        ScoreCell {
                            score: None,
                            raw_text: String::new(),
                        },
                    );
                }
            }
            ScoreMatrix {
                pid,
                metric,
                repeats,
                ids: corpus.ids(),
                rows,
            }
        })
        .collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_warnings(path: &Path, warnings: &[String]) -> Result<(), RunError> {
    write_atomic(
        path,
        serde_json::to_string_pretty(warnings)
            .expect("warnings")
            .as_bytes(),
    )
}

fn read_warnings(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

// ---------------------------------------------------------------------
// stages

pub struct PerturbStage {
    pub variants: Vec<VariantCorpus>,
    pub warnings: Vec<String>,
    pub path: PathBuf,
    pub fingerprint: String,
}

fn perturb_provider(
    config: &RunConfig,
    plan: &PerturbationPlan,
) -> Result<Option<Provider>, RunError> {
    if !plan.has_llm_specs() {
        return Ok(None);
    }
    if config.offline {
        let mock = MockConfig {
            mode: MockMode::Perturber,
            seed: stream_seed(config.mock.seed, "mock-perturber", ""),
            ..config.mock.clone()
        };
        return Ok(Some(Provider::mock(mock)));
    }
    let provider_cfg = config.perturb_provider.clone().ok_or_else(|| {
        RunError::Config("plan has llm specs but no perturb_provider is configured".into())
    })?;
    Ok(Some(Provider::http(
        provider_cfg,
        Some(config.cache_path()),
    )?))
}

/// Produces (or reloads) the variant corpora for the run.
pub fn perturb_stage(
    config: &RunConfig,
    corpus: &Corpus,
    plan: &PerturbationPlan,
) -> Result<PerturbStage, RunError> {
    let dataset = dataset_text(config)?;
    let fingerprint = variants_fingerprint(config, &dataset, plan);
    let path = stages_dir(config).join(format!("variants-{fingerprint}.jsonl"));
    let warnings_path = path.with_extension("warnings.json");

    if path.exists() {
        let variants = read_variants_jsonl(&path, corpus, plan)?;
        return Ok(PerturbStage {
            variants,
            warnings: read_warnings(&warnings_path),
            path,
            fingerprint,
        });
    }

    let provider = perturb_provider(config, plan)?;
    let templates = template_store(config);
    let (variants, warnings) =
        apply_plan(corpus, plan, config.seed, provider.as_ref(), &templates)?;
    write_variants_jsonl(&variants, &path)?;
    write_warnings(&warnings_path, &warnings)?;
    Ok(PerturbStage {
        variants,
        warnings,
        path,
        fingerprint,
    })
}

pub struct EvaluateStage {
    pub matrices: Vec<ScoreMatrix>,
    pub warnings: Vec<String>,
    pub path: PathBuf,
    /// Upstream call count observed while producing this stage (zero when
    /// the artifact was reloaded).
    pub upstream_calls: u64,
    pub cache_hits: u64,
}

fn scorer_provider(
    config: &RunConfig,
    entry: Option<&ModelEntry>,
    model_name: &str,
) -> Result<Provider, RunError> {
    if config.offline {
        let mock = MockConfig {
            mode: MockMode::Scorer,
            seed: stream_seed(config.mock.seed, "mock-scorer", model_name),
            ..config.mock.clone()
        };
        return Ok(Provider::mock(mock));
    }
    let entry = entry
        .ok_or_else(|| RunError::Config(format!("model `{model_name}` has no provider entry")))?;
    Ok(Provider::http(
        entry.provider.clone(),
        Some(config.cache_path()),
    )?)
}

/// Scores every variant on every task metric for one model, reusing the
/// persisted artifact when the fingerprint matches.
pub fn evaluate_stage(
    config: &RunConfig,
    corpus: &Corpus,
    variants: &[VariantCorpus],
    variants_fp: &str,
    model_name: &str,
) -> Result<EvaluateStage, RunError> {
    let fingerprint = scores_fingerprint(config, variants_fp, model_name);
    let path = stages_dir(config).join(format!(
        "scores-{}-{fingerprint}.jsonl",
        sanitize(model_name)
    ));
    let warnings_path = path.with_extension("warnings.json");

    if path.exists() {
        return Ok(EvaluateStage {
            matrices: read_matrices_jsonl(&path, corpus)?,
            warnings: read_warnings(&warnings_path),
            path,
            upstream_calls: 0,
            cache_hits: 0,
        });
    }

    let entry = config.models.iter().find(|m| m.name == model_name);
    let provider = scorer_provider(config, entry, model_name)?;
    let templates = template_store(config);

    let mut matrices = Vec::new();
    let mut warnings = Vec::new();
    for metric in config.task.metrics() {
        let template = templates.evaluation(config.task, metric)?;
        for variant in variants {
            let (matrix, mut w) =
                score_variant(variant, corpus, &template, &provider, config.repeats)?;
            matrices.push(matrix);
            warnings.append(&mut w);
        }
    }
    // provider warnings surface in thread-completion order; sort them so
    // warm re-runs reproduce the report byte for byte
    let mut provider_warnings = provider.take_warnings();
    provider_warnings.sort();
    warnings.extend(provider_warnings);
    write_matrices_jsonl(&matrices, &path)?;
    write_warnings(&warnings_path, &warnings)?;
    let (upstream, _, hits, _) = provider.stats.snapshot();
    Ok(EvaluateStage {
        matrices,
        warnings,
        path,
        upstream_calls: upstream,
        cache_hits: hits,
    })
}

// ---------------------------------------------------------------------
// stats

fn expert_weights(
    config: &RunConfig,
    plan: &PerturbationPlan,
    warnings: &mut Vec<String>,
) -> Result<ExpertWeights, RunError> {
    let metrics = config.task.metric_names();
    let pids = plan.pids();
    let Some(path) = &config.expert_votes else {
        return Ok(ExpertWeights::uniform(&pids, metrics.len()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read expert votes `{path}`: {e}")))?;
    #[derive(Deserialize)]
    struct VoteFile {
        task: String,
        votes: BTreeMap<String, BTreeMap<String, u64>>,
    }
    let file: VoteFile = serde_json::from_str(&text)
        .map_err(|e| RunError::Config(format!("malformed expert votes `{path}`: {e}")))?;
    if file.task != config.task.as_str() {
        return Err(RunError::Config(format!(
            "expert votes are for task `{}`, run is `{}`",
            file.task, config.task
        )));
    }
    let mut ew = ExpertWeights::default();
    for pid in &pids {
        match file.votes.get(pid) {
            Some(votes) => {
                for metric in votes.keys() {
                    if !metrics.contains(metric) {
                        warnings.push(format!(
                            "expert votes: pid `{pid}` names unknown metric `{metric}`; ignored"
                        ));
                    }
                }
                let w = crate::stats::expert_weights_from_votes(votes, &metrics)?;
                ew.by_pid.insert(pid.clone(), w);
            }
            None => {
                warnings.push(format!(
                    "expert votes: no entry for pid `{pid}`; using uniform weights"
                ));
                ew.by_pid
                    .insert(pid.clone(), vec![1.0 / metrics.len() as f64; metrics.len()]);
            }
        }
    }
    for pid in file.votes.keys() {
        if !pids.contains(pid) {
            warnings.push(format!(
                "expert votes: pid `{pid}` is not in the plan; ignored"
            ));
        }
    }
    Ok(ew)
}

/// Builds the per-model statistics from score matrices: pairwise deletion
/// against the original variant, one test per perturbation x metric, then
/// combination and aggregation.
pub fn stats_for_model(
    config: &RunConfig,
    plan: &PerturbationPlan,
    matrices: &[ScoreMatrix],
    model_name: &str,
    with_oracle: bool,
    warnings: &mut Vec<String>,
) -> Result<(ModelReport, Vec<String>), RunError> {
    let metrics = config.task.metric_names();
    let sets: BTreeMap<(String, String), ScoreSet> = matrices
        .iter()
        .map(|m| ((m.pid.clone(), m.metric.clone()), average_repeats(m)))
        .collect();

    let lookup = |pid: &str, metric: &str| -> Result<&ScoreSet, RunError> {
        sets.get(&(pid.to_string(), metric.to_string()))
            .ok_or_else(|| RunError::Data(format!("no scores for pid `{pid}` metric `{metric}`")))
    };

    let wcfg = config.stats.wilcoxon_config();
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    let mut oracle_lines = Vec::new();
    for pid in plan.pids() {
        let mut outcomes = Vec::new();
        for metric in &metrics {
            let original = lookup("original", metric)?;
            let perturbed = lookup(&pid, metric)?;
            let pair = PairedScores::from_options(&original.scores, &perturbed.scores)
                .map_err(|e| RunError::Stats(format!("pid `{pid}` metric `{metric}`: {e}")))?;
            let outcome = wilcoxon_one_sided(&pair, &wcfg)?;
            if with_oracle && outcome.n_effective > 0 && outcome.n_effective <= 20 {
                let oracle = wilcoxon_enumeration_oracle(&pair)?;
                oracle_lines.push(format!(
                    "{model_name} {pid} {metric}: p={:.6e} oracle={:.6e} |diff|={:.3e} mode={:?}",
                    outcome.p_value,
                    oracle,
                    (outcome.p_value - oracle).abs(),
                    outcome.mode_used
                ));
            }
            tests.push(CellSummary {
                pid: pid.clone(),
                metric: metric.clone(),
                p_value: outcome.p_value,
                statistic: outcome.statistic,
                z_score: outcome.z_score,
                n_effective: outcome.n_effective,
                mode_used: outcome.mode_used,
                all_zero: outcome.all_zero,
                n_pairs: pair.len(),
            });
            outcomes.push(outcome);
        }
        rows.push(PValueRow {
            pid: pid.clone(),
            outcomes,
        });
    }

    let grid = PValueGrid {
        metrics: metrics.clone(),
        rows,
    };
    let ew = expert_weights(config, plan, warnings)?;
    let weights = level_weights(plan)?;
    let discernment = aggregate_discernment(&grid, &ew, &weights, config.stats.hmp)?;

    let score_holes = matrices
        .iter()
        .map(|m| {
            m.rows
                .iter()
                .filter(|row| {
                    let any_scored = row.iter().any(|c| c.score.is_some());
                    let any_hole = row.iter().any(|c| c.score.is_none());
                    any_scored && any_hole
                })
                .count()
        })
        .sum();

    Ok((
        ModelReport {
            model: model_name.to_string(),
            discernment,
            tests,
            score_holes,
        },
        oracle_lines,
    ))
}

// ---------------------------------------------------------------------
// commands

pub struct RunArtifacts {
    pub report: BenchmarkReport,
    pub report_path: PathBuf,
    pub written: Vec<PathBuf>,
    pub oracle_lines: Vec<String>,
    pub upstream_calls: u64,
}

/// Full pipeline: perturb, score every model, analyze, write outputs.
pub fn cmd_run(config: &RunConfig) -> Result<RunArtifacts, RunError> {
    run_inner(config, true, false)
}

/// Statistics and outputs from persisted stage artifacts. Scores must
/// already exist (from a prior `run` or `evaluate`); stats options may
/// differ from the scoring run.
pub fn cmd_analyze(config: &RunConfig, with_oracle: bool) -> Result<RunArtifacts, RunError> {
    run_inner(config, false, with_oracle)
}

fn run_inner(
    config: &RunConfig,
    allow_scoring: bool,
    with_oracle: bool,
) -> Result<RunArtifacts, RunError> {
    config.validate()?;
    let started = std::time::SystemTime::now();
    let corpus = load_run_corpus(config)?;
    let plan = resolve_plan(config)?;
    std::fs::create_dir_all(stages_dir(config))?;

    let perturb = perturb_stage(config, &corpus, &plan)?;
    let mut warnings = perturb.warnings.clone();
    let mut exclusions = BTreeMap::new();
    for v in &perturb.variants {
        if v.pid != "original" {
            exclusions.insert(v.pid.clone(), v.excluded.len());
        }
    }

    let mut models = Vec::new();
    let mut oracle_lines = Vec::new();
    let mut upstream_total = 0;
    let mut cache_hits_total = 0;
    for model_name in config.model_names() {
        let stage = if allow_scoring {
            evaluate_stage(
                config,
                &corpus,
                &perturb.variants,
                &perturb.fingerprint,
                &model_name,
            )?
        } else {
            let fingerprint = scores_fingerprint(config, &perturb.fingerprint, &model_name);
            let path = stages_dir(config).join(format!(
                "scores-{}-{fingerprint}.jsonl",
                sanitize(&model_name)
            ));
            if !path.exists() {
                return Err(RunError::Data(format!(
                    "no persisted scores for model `{model_name}`; run `run` or `evaluate` first"
                )));
            }
            EvaluateStage {
                matrices: read_matrices_jsonl(&path, &corpus)?,
                warnings: read_warnings(&path.with_extension("warnings.json")),
                path,
                upstream_calls: 0,
                cache_hits: 0,
            }
        };
        warnings.extend(stage.warnings.clone());
        upstream_total += stage.upstream_calls;
        cache_hits_total += stage.cache_hits;
        let (report, mut oracle) = stats_for_model(
            config,
            &plan,
            &stage.matrices,
            &model_name,
            with_oracle,
            &mut warnings,
        )?;
        oracle_lines.append(&mut oracle);
        models.push(report);
    }

    let report = assemble_report(models, config, &config.plan, &plan, exclusions, warnings)?;
    let out_dir = PathBuf::from(&config.output_dir);
    let written = output::write_outputs(&report, &out_dir)?;
    let report_path = out_dir.join("report.json");

    // wall-clock metadata lives outside report.json so warm re-runs stay
    // byte-identical
    let finished = std::time::SystemTime::now();
    let epoch = |t: std::time::SystemTime| {
        t.duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    };
    let meta = serde_json::json!({
        "started_epoch_s": epoch(started),
        "finished_epoch_s": epoch(finished),
        "duration_ms": finished.duration_since(started).map(|d| d.as_millis() as u64).unwrap_or(0),
        "upstream_calls": upstream_total,
        "cache_hits": cache_hits_total,
    });
    write_atomic(
        &out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta)
            .expect("meta")
            .as_bytes(),
    )?;

    Ok(RunArtifacts {
        report,
        report_path,
        written,
        oracle_lines,
        upstream_calls: upstream_total,
    })
}

/// Perturb stage only; returns the variants artifact path.
pub fn cmd_perturb(config: &RunConfig) -> Result<PathBuf, RunError> {
    config.validate()?;
    let corpus = load_run_corpus(config)?;
    let plan = resolve_plan(config)?;
    std::fs::create_dir_all(stages_dir(config))?;
    Ok(perturb_stage(config, &corpus, &plan)?.path)
}

/// Perturb plus scoring for every model; returns the score artifact paths.
pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    config.validate()?;
    let corpus = load_run_corpus(config)?;
    let plan = resolve_plan(config)?;
    std::fs::create_dir_all(stages_dir(config))?;
    let perturb = perturb_stage(config, &corpus, &plan)?;
    let mut paths = Vec::new();
    for model_name in config.model_names() {
        let stage = evaluate_stage(
            config,
            &corpus,
            &perturb.variants,
            &perturb.fingerprint,
            &model_name,
        )?;
        paths.push(stage.path);
    }
    Ok(paths)
}

// ---------------------------------------------------------------------
// self test

/// Internal consistency checks for the statistics chain, printed by the
/// `stats-selftest` subcommand. Returns one line per passed check.
pub fn stats_selftest() -> Result<Vec<String>, RunError> {
    use crate::stats::{discernment_score, hmp, hmp_weighted, Mode, ModeUsed, WilcoxonConfig};

    let mut lines = Vec::new();
    let mut check = |name: &str, ok: bool| -> Result<(), RunError> {
        if ok {
            lines.push(format!("selftest {name}: ok"));
            Ok(())
        } else {
            Err(RunError::Stats(format!("selftest {name}: FAILED")))
        }
    };

    let cfg = WilcoxonConfig::default();
    let pair = PairedScores::new(vec![2.0, 3.0, 4.0, 5.0, 6.0], vec![1.0; 5]).unwrap();
    let out = wilcoxon_one_sided(&pair, &cfg).unwrap();
    check(
        "exact known value d=[1..5]",
        out.p_value == 0.03125 && out.statistic == 15.0 && out.mode_used == ModeUsed::Exact,
    )?;

    let zero = PairedScores::new(vec![3.0; 4], vec![3.0; 4]).unwrap();
    let out = wilcoxon_one_sided(&zero, &cfg).unwrap();
    check(
        "all-zero differences give p=1",
        out.all_zero && out.p_value == 1.0,
    )?;
    check(
        "discernment thresholds",
        (discernment_score(0.05).unwrap() - 1.0).abs() < 1e-12
            && discernment_score(1.0).unwrap() == 0.0,
    )?;

    // seeded random draws: exact path against the sign-enumeration oracle,
    // and the normal path within its documented envelope (about half the
    // local point mass anywhere, much tighter in the p <= 0.05 tail)
    let mut worst_exact = 0.0f64;
    let mut worst_normal = 0.0f64;
    let mut worst_tail = 0.0f64;
    let mut exact_cases = 0;
    let mut rng = crate::rng::Stream::derive(17, "selftest", "draws");
    for _ in 0..200 {
        let n = 3 + rng.below(10) as usize;
        let avg = |rng: &mut crate::rng::Stream| -> f64 {
            (0..5).map(|_| 1.0 + rng.below(5) as f64).sum::<f64>() / 5.0
        };
        let a: Vec<f64> = (0..n).map(|_| avg(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| avg(&mut rng)).collect();
        let pair = PairedScores::new(a, b).unwrap();
        let auto = wilcoxon_one_sided(&pair, &cfg).unwrap();
        if auto.all_zero {
            continue;
        }
        let oracle = wilcoxon_enumeration_oracle(&pair).unwrap();
        if auto.mode_used == ModeUsed::Exact {
            exact_cases += 1;
            worst_exact = worst_exact.max((auto.p_value - oracle).abs());
        }
        if auto.n_effective >= 10 {
            let normal = wilcoxon_one_sided(
                &pair,
                &WilcoxonConfig {
                    mode: Mode::Normal,
                    ..cfg
                },
            )
            .unwrap();
            let diff = (normal.p_value - oracle).abs();
            worst_normal = worst_normal.max(diff);
            if oracle <= 0.05 {
                worst_tail = worst_tail.max(diff);
            }
        }
    }
    check(
        "exact path equals enumeration oracle",
        exact_cases > 10 && worst_exact <= 1e-12,
    )?;
    check(
        "normal path within documented envelope at n>=10",
        worst_normal <= 0.05 && worst_tail <= 0.01,
    )?;

    let mut worst_hmp = 0.0f64;
    for seed in 0..2000u64 {
        let mut r = crate::rng::Stream::derive(seed, "selftest", "hmp");
        let ps: Vec<f64> = (0..4).map(|_| r.unit_f64().max(1e-6)).collect();
        let combined = hmp(&ps).unwrap();
        let min = ps.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_hmp = worst_hmp.max(combined - min);
        let mut w = vec![0.0; 4];
        w[(seed % 4) as usize] = 1.0;
        let one_hot = hmp_weighted(&ps, &w).unwrap();
        worst_hmp = worst_hmp.max((one_hot - ps[(seed % 4) as usize]).abs());
    }
    check("hmp bound and one-hot identity", worst_hmp <= 1e-15)?;

    let votes: BTreeMap<String, u64> = [
        ("coherence".to_string(), 4u64),
        ("consistency".to_string(), 1),
        ("fluency".to_string(), 5),
    ]
    .into();
    let metrics: Vec<String> = ["coherence", "consistency", "fluency"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let w = crate::stats::expert_weights_from_votes(&votes, &metrics).unwrap();
    check("expert vote normalization", w == vec![0.4, 0.1, 0.5])?;

    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offline_config(out: &Path) -> RunConfig {
        serde_json::from_value(serde_json::json!({
            "dataset": "builtin:mini_translation",
            "task": "translation",
            "plan": "mini",
            "seed": 1,
            "n": 10,
            "repeats": 2,
            "offline": true,
            "output_dir": out.to_str().unwrap(),
        }))
        .unwrap()
    }

    #[test]
    fn selftest_passes() {
        let lines = stats_selftest().unwrap();
        assert!(lines.len() >= 6);
    }

    #[test]
    fn full_offline_run_produces_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = offline_config(dir.path());
        let artifacts = cmd_run(&cfg).unwrap();
        assert_eq!(artifacts.report.models.len(), 1);
        assert_eq!(artifacts.report.models[0].discernment.per_pid.len(), 4);
        assert!(artifacts.report_path.exists());
        assert_eq!(artifacts.upstream_calls, 0);
    }

    #[test]
    fn rerun_is_byte_identical_and_call_free() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = offline_config(dir.path());
        cmd_run(&cfg).unwrap();
        let first = std::fs::read(dir.path().join("report.json")).unwrap();
        let second_run = cmd_run(&cfg).unwrap();
        let second = std::fs::read(dir.path().join("report.json")).unwrap();
        assert_eq!(first, second);
        assert_eq!(second_run.upstream_calls, 0);
    }

    #[test]
    fn every_task_runs_offline_with_its_builtin_plan() {
        for (dataset, task, plan, pids, metrics) in [
            ("builtin:mini_summarization", "summarization", "summeval", 12, 4),
            ("builtin:mini_story", "story_completion", "storycloze", 6, 3),
            ("builtin:mini_qa", "question_answering", "answer_eq", 9, 1),
            ("builtin:mini_translation", "translation", "wmt22_de_en", 8, 2),
        ] {
            let dir = tempfile::tempdir().unwrap();
            let cfg: RunConfig = serde_json::from_value(serde_json::json!({
                "dataset": dataset,
                "task": task,
                "plan": plan,
                "seed": 2,
                "n": 6,
                "repeats": 1,
                "offline": true,
                "output_dir": dir.path().to_str().unwrap(),
            }))
            .unwrap();
            let artifacts = cmd_run(&cfg).unwrap_or_else(|e| panic!("{plan}: {e}"));
            let model = &artifacts.report.models[0];
            assert_eq!(model.discernment.per_pid.len(), pids, "{plan}");
            assert_eq!(model.tests.len(), pids * metrics, "{plan}");
            assert!(model.discernment.d_min >= 0.0);
        }
    }

    #[test]
    fn analyze_requires_persisted_scores() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = offline_config(dir.path());
        assert!(matches!(cmd_analyze(&cfg, false), Err(RunError::Data(_))));
        cmd_run(&cfg).unwrap();
        let again = cmd_analyze(&cfg, true).unwrap();
        assert_eq!(again.report.models.len(), 1);
        assert!(!again.oracle_lines.is_empty());
    }

    #[test]
    fn variants_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = offline_config(dir.path());
        let corpus = load_run_corpus(&cfg).unwrap();
        let plan = resolve_plan(&cfg).unwrap();
        let stage = perturb_stage(&cfg, &corpus, &plan).unwrap();
        let reloaded = read_variants_jsonl(&stage.path, &corpus, &plan).unwrap();
        assert_eq!(reloaded.len(), stage.variants.len());
        for (a, b) in reloaded.iter().zip(&stage.variants) {
            assert_eq!(a.pid, b.pid);
            assert_eq!(a.texts, b.texts);
            assert_eq!(a.excluded, b.excluded);
        }
    }

    #[test]
    fn expert_votes_flow_into_weighted_discernment() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = offline_config(dir.path());
        let votes_path = dir.path().join("votes.json");
        std::fs::write(
            &votes_path,
            serde_json::json!({
                "task": "translation",
                "votes": {
                    "char.delete": {"accuracy": 0, "fluency": 10},
                    "word.delete": {"accuracy": 5, "fluency": 5},
                    "word.entities": {"accuracy": 1, "bogus_metric": 2},
                    "not.in.plan": {"accuracy": 1}
                }
            })
            .to_string(),
        )
        .unwrap();
        cfg.expert_votes = Some(votes_path.display().to_string());
        let artifacts = cmd_run(&cfg).unwrap();
        let model = &artifacts.report.models[0];

        // one-hot fluency votes: the weighted combination is exactly the
        // fluency cell's p, and differs from the unweighted combination
        let fluency_p = model
            .tests
            .iter()
            .find(|t| t.pid == "char.delete" && t.metric == "fluency")
            .unwrap()
            .p_value;
        let pid = model
            .discernment
            .per_pid
            .iter()
            .find(|p| p.pid == "char.delete")
            .unwrap();
        assert!((pid.p_combined_ew - fluency_p).abs() < 1e-15);
        assert_ne!(pid.p_combined_ew.to_bits(), pid.p_combined.to_bits());

        let warnings = artifacts.report.warnings.join("\n");
        assert!(
            warnings.contains("no entry for pid `char.typos`"),
            "{warnings}"
        );
        assert!(
            warnings.contains("unknown metric `bogus_metric`"),
            "{warnings}"
        );
        assert!(
            warnings.contains("`not.in.plan` is not in the plan"),
            "{warnings}"
        );
    }

    #[test]
    fn votes_for_wrong_task_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = offline_config(dir.path());
        let votes_path = dir.path().join("votes.json");
        std::fs::write(
            &votes_path,
            serde_json::json!({"task": "summarization", "votes": {}}).to_string(),
        )
        .unwrap();
        cfg.expert_votes = Some(votes_path.display().to_string());
        assert!(matches!(cmd_run(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn missing_dataset_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = offline_config(dir.path());
        cfg.dataset = "/no/such/file.jsonl".into();
        match cmd_run(&cfg) {
            Err(e @ RunError::Config(_)) => assert_eq!(e.exit_code(), 2),
            Err(other) => panic!("expected config error, got {other:?}"),
            Ok(_) => panic!("expected config error, got a report"),
        }
    }
}

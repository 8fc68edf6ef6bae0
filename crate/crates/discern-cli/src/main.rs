//! Command-line front end for the discern benchmark pipeline.
//!
//! Exit codes: 0 success, 2 config error, 3 provider error, 4 data error,
//! 5 stats error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use discern::report::pipeline::{
    cmd_analyze, cmd_evaluate, cmd_perturb, cmd_run, stats_selftest, RunArtifacts,
};
use discern::report::{RunConfig, RunError};

#[derive(Parser)]
#[command(
    name = "discern",
    version,
    about = "Benchmark how reliably an LLM evaluator downgrades perturbed reference text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Run config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Score only these model names (repeatable).
    #[arg(long = "model", value_name = "NAME")]
    models: Vec<String>,
    /// Use the seeded mock provider instead of real endpoints.
    #[arg(long)]
    offline: bool,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Produce the perturbed variant corpora.
    Perturb(CommonArgs),
    /// Perturb (reusing artifacts) and collect evaluator scores.
    Evaluate(CommonArgs),
    /// Recompute statistics from persisted scores and write report.json.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Cross-check each cell against the sign-enumeration oracle
        /// (n_effective <= 20).
        #[arg(long)]
        oracle: bool,
    },
    /// Rebuild all outputs (report.json, scores.csv, chart.svg) from
    /// persisted scores.
    Report(CommonArgs),
    /// Full pipeline: perturb, evaluate, analyze, report.
    Run(CommonArgs),
    /// Run the statistics self-checks against the enumeration oracle.
    StatsSelftest,
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, RunError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.offline {
        config.offline = true;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.display().to_string();
    }
    if !common.models.is_empty() {
        let known: Vec<String> = config.models.iter().map(|m| m.name.clone()).collect();
        for name in &common.models {
            if !known.contains(name) {
                return Err(RunError::Config(format!(
                    "--model {name} is not in the config (known: {})",
                    known.join(", ")
                )));
            }
        }
        config.models.retain(|m| common.models.contains(&m.name));
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(artifacts: &RunArtifacts) {
    let report = &artifacts.report;
    println!(
        "task={} dataset={} plan={} n={} repeats={} seed={}",
        report.task, report.dataset, report.plan_name, report.n, report.repeats, report.seed
    );
    for model in &report.models {
        let d = &model.discernment;
        println!(
            "{}: D_avg={:.3} D_min={:.3} D_ew_avg={:.3} D_ew_min={:.3} (holes={})",
            model.model, d.d_avg, d.d_min, d.d_ew_avg, d.d_ew_min, model.score_holes
        );
    }
    if !report.warnings.is_empty() {
        println!("warnings: {}", report.warnings.len());
    }
    for path in &artifacts.written {
        println!("wrote {}", path.display());
    }
}

fn run() -> Result<(), RunError> {
    match Cli::parse().command {
        Command::Perturb(common) => {
            let config = load_config(&common)?;
            let path = cmd_perturb(&config)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate(common) => {
            let config = load_config(&common)?;
            for path in cmd_evaluate(&config)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Analyze { common, oracle } => {
            let config = load_config(&common)?;
            let artifacts = cmd_analyze(&config, oracle)?;
            for line in &artifacts.oracle_lines {
                println!("{line}");
            }
            print_summary(&artifacts);
        }
        Command::Report(common) => {
            let config = load_config(&common)?;
            let artifacts = cmd_analyze(&config, false)?;
            print_summary(&artifacts);
        }
        Command::Run(common) => {
            let config = load_config(&common)?;
            let artifacts = cmd_run(&config)?;
            print_summary(&artifacts);
        }
        Command::StatsSelftest => {
            for line in stats_selftest()? {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! End-to-end checks of the `discern` binary against the bundled data.

use std::path::Path;
use std::process::{Command, Output};

fn discern(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discern"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path.display().to_string()
}

fn mini_config(dir: &Path) -> String {
    write_config(
        dir,
        serde_json::json!({
            "dataset": "builtin:mini_translation",
            "task": "translation",
            "plan": "mini",
            "seed": 7,
            "n": 20,
            "repeats": 5,
            "offline": true,
            "output_dir": dir.join("out").display().to_string(),
        }),
    )
}

#[test]
fn run_offline_produces_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path());
    let out = discern(&["run", "--config", &config]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in ["report.json", "scores.csv", "chart.svg", "run_meta.json"] {
        assert!(dir.path().join("out").join(file).exists(), "{file} missing");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("D_avg="));
}

#[test]
fn missing_dataset_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        serde_json::json!({
            "dataset": "/definitely/not/here.jsonl",
            "task": "translation",
            "plan": "mini",
            "offline": true,
            "output_dir": dir.path().join("out").display().to_string(),
        }),
    );
    let out = discern(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn analyze_before_scoring_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path());
    let out = discern(&["analyze", "--config", &config]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_model_filter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path());
    let out = discern(&["run", "--config", &config, "--model", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perturb_then_evaluate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path());
    let p = discern(&["perturb", "--config", &config]);
    assert!(p.status.success());
    assert!(String::from_utf8_lossy(&p.stdout).contains("variants-"));
    let e = discern(&["evaluate", "--config", &config]);
    assert!(e.status.success());
    let r = discern(&["report", "--config", &config]);
    assert!(
        r.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn analyze_oracle_prints_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path());
    assert!(discern(&["run", "--config", &config]).status.success());
    let out = discern(&["analyze", "--config", &config, "--oracle"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle="), "no oracle lines in: {stdout}");
}

#[test]
fn stats_selftest_passes() {
    let out = discern(&["stats-selftest"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().filter(|l| l.ends_with(": ok")).count() >= 6);
}

#[test]
fn seed_override_changes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path());
    assert!(discern(&["run", "--config", &config]).status.success());
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert!(discern(&["run", "--config", &config, "--seed", "8"])
        .status
        .success());
    let second = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert_ne!(first, second);
}

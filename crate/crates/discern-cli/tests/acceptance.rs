//! Acceptance criterion 10: the offline end-to-end run through the real
//! binary on the bundled mini corpus.

use std::process::Command;
use std::time::Instant;

#[test]
fn criterion_10_offline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "dataset": "builtin:mini_translation",
            "task": "translation",
            "plan": "mini",
            "seed": 7,
            "n": 20,
            "repeats": 5,
            "output_dir": out_dir.display().to_string(),
        }))
        .unwrap(),
    )
    .unwrap();

    let run = || {
        Command::new(env!("CARGO_BIN_EXE_discern"))
            .args(["run", "--config"])
            .arg(&config_path)
            .arg("--offline")
            .output()
            .expect("binary runs")
    };

    let started = Instant::now();
    let first = run();
    let elapsed = started.elapsed();
    assert!(
        first.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(elapsed.as_secs() < 60, "run took {elapsed:?}");

    // schema-valid report: parses, carries the expected shape
    let report_path = out_dir.join("report.json");
    let report_bytes = std::fs::read(&report_path).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&report_bytes).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["task"], "translation");
    assert_eq!(report["n"], 20);
    assert_eq!(report["repeats"], 5);
    assert_eq!(report["plan"]["specs"].as_array().unwrap().len(), 4);
    let model = &report["models"][0];
    assert_eq!(model["discernment"]["per_pid"].as_array().unwrap().len(), 4);
    for key in ["d_avg", "d_min", "d_ew_avg", "d_ew_min"] {
        assert!(model["discernment"][key].is_number(), "missing {key}");
    }
    assert!(report["config_hash"].as_str().unwrap().len() == 32);

    // warm re-run: byte-identical report, zero upstream calls
    let second = run();
    assert!(second.status.success());
    let report_again = std::fs::read(&report_path).unwrap();
    assert_eq!(
        report_bytes, report_again,
        "warm re-run changed report.json"
    );
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["upstream_calls"], 0);

    println!(
        "criterion 10: PASS — offline run in {elapsed:?}, schema-valid report, byte-identical warm re-run with zero upstream calls"
    );
}

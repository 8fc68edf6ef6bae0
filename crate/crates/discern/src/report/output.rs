//! Report serialization: canonical key-sorted JSON, the long-format CSV,
//! and the grouped-bar SVG chart.

use std::path::{Path, PathBuf};

use super::{svg, BenchmarkReport, RunError};

/// Canonical JSON: the report is converted to a `serde_json::Value`, whose
/// object maps are BTree-backed, so keys serialize sorted and re-runs are
/// byte-identical.
pub fn report_json(report: &BenchmarkReport) -> String {
    let value = serde_json::to_value(report).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

/// Long-format CSV, one row per model and perturbation. The metric column
/// carries the task's metric list (joined with `+`) since `p`, `D`, and
/// `D_ew` are combined across metrics.
pub fn scores_csv(report: &BenchmarkReport) -> String {
    let metric_label = report.task.metrics().join("+");
    let mut out = String::from("model,pid,metric,p,D,D_ew,weight\n");
    for model in &report.models {
        for pid in &model.discernment.per_pid {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_escape(&model.model),
                csv_escape(&pid.pid),
                metric_label,
                pid.p_combined,
                pid.d,
                pid.d_ew,
                pid.level_weight
            ));
        }
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Writes `report.json`, `scores.csv`, and `chart.svg`; returns the paths.
pub fn write_outputs(report: &BenchmarkReport, out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let files = [
        ("report.json", report_json(report)),
        ("scores.csv", scores_csv(report)),
        ("chart.svg", svg::chart_svg(report)),
    ];
    let mut written = Vec::new();
    for (name, content) in files {
        let path = out_dir.join(name);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, content.as_bytes())?;
        std::fs::rename(&tmp, &path)?;
        written.push(path);
    }
    Ok(written)
}

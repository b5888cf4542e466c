//! Table emission: every table family is written as JSON and CSV from the
//! same in-memory rows, plus a plot-ready long-format CSV of scored samples.
//! Emission is deterministic, so re-running it is byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::runner::aggregate::{AnalysisResult, AnalysisTables, SettingComparison};
use crate::scoring::{BiasSample, TrialStatus};
use crate::corpus::DialectCode;
use crate::{FallbackMode, Result, Setting, TaskKind};

/// One scored sample in long format for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct LongRow<'a> {
    request_id: &'a str,
    backend_id: &'a str,
    task: TaskKind,
    setting: Setting,
    #[serde(rename = "trait")]
    trait_name: &'a str,
    dialect: DialectCode,
    topic: Option<&'a str>,
    scenario_id: Option<&'a str>,
    text_pair_id: Option<&'a str>,
    fallback_mode: FallbackMode,
    score: f64,
}

fn write_json<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(rows)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_pair<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> Result<(PathBuf, PathBuf)> {
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    write_json(&json_path, rows)?;
    write_csv(&csv_path, rows)?;
    Ok((json_path, csv_path))
}

/// Writes the four table families, the long-format sample CSV, and the
/// warning list into `analysis_dir`. Returns every path written.
pub fn write_tables(
    analysis_dir: &Path,
    tables: &AnalysisTables,
    samples: &[BiasSample],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(analysis_dir)?;
    let mut written = Vec::new();

    for (stem, rows) in [
        ("trait", &tables.by_trait),
        ("dialect", &tables.by_dialect),
        ("topic", &tables.by_topic),
    ] {
        let (json_path, csv_path) = write_pair(analysis_dir, stem, rows)?;
        written.push(json_path);
        written.push(csv_path);
    }
    let (json_path, csv_path) =
        write_pair(analysis_dir, "setting_comparison", &tables.setting_comparison)?;
    written.push(json_path);
    written.push(csv_path);

    let long_rows: Vec<LongRow> = samples
        .iter()
        .filter(|s| s.status == TrialStatus::Scored)
        .map(|s| LongRow {
            request_id: &s.request_id,
            backend_id: &s.backend_id,
            task: s.task,
            setting: s.setting,
            trait_name: &s.trait_name,
            dialect: s.dialect,
            topic: s.topic.as_deref(),
            scenario_id: s.scenario_id.as_deref(),
            text_pair_id: s.text_pair_id.as_deref(),
            fallback_mode: s.fallback_mode,
            score: s.score.expect("scored sample has score"),
        })
        .collect();
    let long_path = analysis_dir.join("samples_long.csv");
    write_csv(&long_path, &long_rows)?;
    written.push(long_path);

    let warnings_path = analysis_dir.join("warnings.txt");
    let mut text = tables.warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(&warnings_path, text)?;
    written.push(warnings_path);

    Ok(written)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:+.4}"))
}

fn cell_line(row: &AnalysisResult) -> String {
    format!(
        "  {:<28} {:<10} {:<11} {:<13} n={:<5} mean={} ci=[{}, {}] p={} d={}{}",
        row.key,
        row.backend_id,
        row.task,
        row.setting.map_or_else(|| "-".to_string(), |s| s.to_string()),
        row.n,
        fmt_opt(row.mean),
        fmt_opt(row.ci_lo),
        fmt_opt(row.ci_hi),
        row.p.map_or_else(|| "-".to_string(), |p| format!("{p:.3e}")),
        fmt_opt(row.cohens_d),
        row.note.as_deref().map_or_else(String::new, |n| format!("  [{n}]")),
    )
}

fn comparison_line(row: &SettingComparison) -> String {
    format!(
        "  {:<10} {:<11} {} vs {}: mean {} vs {} (n={} vs {}), t={}, p={}{}",
        row.backend_id,
        row.task,
        row.left_setting,
        row.right_setting,
        fmt_opt(row.left_mean),
        fmt_opt(row.right_mean),
        row.left_n,
        row.right_n,
        fmt_opt(row.t),
        row.p.map_or_else(|| "-".to_string(), |p| format!("{p:.3e}")),
        row.note.as_deref().map_or_else(String::new, |n| format!("  [{n}]")),
    )
}

/// Human-readable digest of all tables for terminal output.
pub fn render_summary(tables: &AnalysisTables) -> String {
    let mut out = String::new();
    for (title, rows) in [
        ("By trait", &tables.by_trait),
        ("By dialect", &tables.by_dialect),
        ("By topic", &tables.by_topic),
    ] {
        out.push_str(title);
        out.push('\n');
        if rows.is_empty() {
            out.push_str("  (no cells)\n");
        }
        for row in rows {
            out.push_str(&cell_line(row));
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str("Setting comparisons\n");
    if tables.setting_comparison.is_empty() {
        out.push_str("  (no comparable settings)\n");
    }
    for row in &tables.setting_comparison {
        out.push_str(&comparison_line(row));
        out.push('\n');
    }
    if !tables.warnings.is_empty() {
        out.push_str("\nWarnings\n");
        for warning in &tables.warnings {
            out.push_str("  ");
            out.push_str(warning);
            out.push('\n');
        }
    }
    out
}

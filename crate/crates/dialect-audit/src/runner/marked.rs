//! Marked-words harvesting over a finished run: splits each decision
//! response into the two writers' profile texts, buckets them into
//! (backend, trait, dialect) cells, builds each cell's prior from the other
//! traits' profiles of both roles, and writes one CSV of significant tokens
//! per cell.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::DialectCode;
use crate::markedwords::{marked_words, MarkedWord};
use crate::prompting::PromptInstance;
use crate::runner::exec::{load_manifest, load_trials, load_transcript};
use crate::{Error, Result, Role, TaskKind};

fn writer_a_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bwriter\s+a\b").expect("valid regex"))
}

fn writer_b_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bwriter\s+b\b").expect("valid regex"))
}

/// Splits a decision response into (writer A text, writer B text) using the
/// first "Writer A" marker and the first "Writer B" marker after it.
pub fn split_profiles(raw_text: &str) -> Option<(String, String)> {
    let a = writer_a_re().find(raw_text)?;
    let b = writer_b_re().find_at(raw_text, a.end())?;
    let trim = |s: &str| {
        s.trim_matches(|c: char| c.is_whitespace() || c == ':' || c == '-' || c == '–' || c == ',')
            .to_string()
    };
    Some((trim(&raw_text[a.end()..b.start()]), trim(&raw_text[b.end()..])))
}

/// Profile texts of one cell, separated by writer role.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct CellDocs {
    pub dialect: Vec<String>,
    pub standard: Vec<String>,
}

type CellKey = (String, String, DialectCode);

/// Buckets every splittable decision response of every backend. Returns the
/// cells and the count of responses that had no recognizable profile pair.
pub fn harvest(
    plan: &[PromptInstance],
    backend_ids: &[String],
    transcripts: &HashMap<String, HashMap<String, String>>,
) -> (BTreeMap<CellKey, CellDocs>, usize) {
    let mut cells: BTreeMap<CellKey, CellDocs> = BTreeMap::new();
    let mut skipped = 0;
    for backend_id in backend_ids {
        let Some(replies) = transcripts.get(backend_id) else { continue };
        for instance in plan {
            if instance.task != TaskKind::Decision {
                continue;
            }
            let Some(raw_text) = replies.get(&instance.request_id) else { continue };
            let Some((a_text, b_text)) = split_profiles(raw_text) else {
                skipped += 1;
                continue;
            };
            let docs = cells
                .entry((backend_id.clone(), instance.trait_name.clone(), instance.dialect))
                .or_default();
            let a_role = instance.writer_map.role_of_letter('A').expect("A is a writer letter");
            for (role, text) in [(a_role, a_text), (a_role.other(), b_text)] {
                match role {
                    Role::Dialect => docs.dialect.push(text),
                    Role::Standard => docs.standard.push(text),
                }
            }
        }
    }
    (cells, skipped)
}

/// Headline numbers for one emitted cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub backend_id: String,
    #[serde(rename = "trait")]
    pub trait_name: String,
    pub dialect: DialectCode,
    pub dialect_docs: usize,
    pub standard_docs: usize,
    pub marked_tokens: usize,
    pub csv_path: PathBuf,
}

/// Result of a marked-words pass over a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedSummary {
    pub out_dir: PathBuf,
    pub cells: Vec<CellSummary>,
    pub skipped_unsplittable: usize,
}

fn write_cell_csv(path: &Path, rows: &[MarkedWord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Computes and writes every cell's marked-words table into `out_dir`.
/// Each cell's prior is the other traits' profiles, both roles, same
/// backend; a cell without prior material is an error because the estimator
/// is undefined without one.
pub fn emit_cells(
    out_dir: &Path,
    cells: &BTreeMap<CellKey, CellDocs>,
    alpha0: Option<f64>,
    z_threshold: f64,
) -> Result<Vec<CellSummary>> {
    std::fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::new();
    for ((backend_id, trait_name, dialect), docs) in cells {
        let prior: Vec<String> = cells
            .iter()
            .filter(|((b, t, _), _)| b == backend_id && t != trait_name)
            .flat_map(|(_, d)| d.dialect.iter().chain(&d.standard).cloned())
            .collect();
        if prior.is_empty() {
            return Err(Error::Stats(format!(
                "cell ({backend_id}, {trait_name}, {dialect}) has no prior material; \
                 marked-words needs decision responses from at least two traits"
            )));
        }
        let rows = marked_words(&docs.dialect, &docs.standard, &prior, alpha0, z_threshold)?;
        let csv_path = out_dir.join(format!("{backend_id}__{trait_name}__{dialect}.csv"));
        write_cell_csv(&csv_path, &rows)?;
        summaries.push(CellSummary {
            backend_id: backend_id.clone(),
            trait_name: trait_name.clone(),
            dialect: *dialect,
            dialect_docs: docs.dialect.len(),
            standard_docs: docs.standard.len(),
            marked_tokens: rows.len(),
            csv_path,
        });
    }
    Ok(summaries)
}

/// Full marked-words pass over a finished run directory.
pub fn run_marked_words(
    run_dir: &Path,
    alpha0: Option<f64>,
    z_threshold: Option<f64>,
) -> Result<MarkedSummary> {
    let manifest = load_manifest(run_dir)?;
    let plan = load_trials(&run_dir.join("trials.jsonl"))?;
    let backend_ids: Vec<String> = manifest.config.backends.iter().map(|b| b.id.clone()).collect();
    let mut transcripts = HashMap::new();
    for id in &backend_ids {
        let path = run_dir.join("transcripts").join(format!("{id}.jsonl"));
        transcripts.insert(id.clone(), load_transcript(&path)?);
    }
    let (cells, skipped_unsplittable) = harvest(&plan, &backend_ids, &transcripts);
    if cells.is_empty() {
        return Err(Error::Stats(
            "no splittable decision responses found; nothing to profile".into(),
        ));
    }
    let out_dir = run_dir.join("analysis").join("marked_words");
    let threshold = z_threshold.unwrap_or(manifest.config.stats.z_threshold);
    let cells = emit_cells(&out_dir, &cells, alpha0, threshold)?;
    Ok(MarkedSummary { out_dir, cells, skipped_unsplittable })
}

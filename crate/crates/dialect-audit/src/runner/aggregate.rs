//! Per-condition aggregation: groups scored samples into cells, attaches
//! bootstrap intervals, one-sample tests against zero, and effect sizes,
//! and derives cross-setting comparisons. All randomness is seeded from
//! (run seed, cell label), so re-aggregation is byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::DialectCode;
use crate::prompting::PromptInstance;
use crate::runner::config::StatsConfig;
use crate::scoring::{BiasSample, TrialStatus};
use crate::seeds::{fnv1a64, splitmix64, stream_rng, Stream};
use crate::stats;
use crate::{Result, Setting, TaskKind};

/// Cell axes a table can group by; the model axis is implicit in every
/// grouping and explicit in `Model`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Trait,
    Dialect,
    Topic,
    Setting,
    Model,
}

impl std::fmt::Display for GroupBy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            GroupBy::Trait => "trait",
            GroupBy::Dialect => "dialect",
            GroupBy::Topic => "topic",
            GroupBy::Setting => "setting",
            GroupBy::Model => "model",
        };
        f.write_str(name)
    }
}

/// Cell coordinates of a trial that produced no response; keeps failure
/// counts attributable without inventing fake samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRef {
    pub request_id: String,
    pub backend_id: String,
    pub task: TaskKind,
    pub setting: Setting,
    pub trait_name: String,
    pub dialect: DialectCode,
    pub topic: Option<String>,
}

impl TrialRef {
    pub fn of(instance: &PromptInstance, backend_id: &str) -> TrialRef {
        TrialRef {
            request_id: instance.request_id.clone(),
            backend_id: backend_id.to_string(),
            task: instance.task,
            setting: instance.setting,
            trait_name: instance.trait_name.clone(),
            dialect: instance.dialect,
            topic: instance.topic.clone(),
        }
    }
}

/// One aggregated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub group_by: GroupBy,
    pub key: String,
    pub backend_id: String,
    pub task: TaskKind,
    /// Absent for the model grouping, which spans settings.
    pub setting: Option<Setting>,
    pub n: usize,
    pub n_rejected: usize,
    pub n_degenerate: usize,
    pub n_failed: usize,
    pub rejection_rate: f64,
    pub degenerate_rate: f64,
    pub mean: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
    pub significant_vs_zero: Option<bool>,
    pub cohens_d: Option<f64>,
    /// Set when the t-test and d are undefined (zero variance).
    pub note: Option<String>,
}

/// Welch comparison between two settings of the same backend and task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingComparison {
    pub backend_id: String,
    pub task: TaskKind,
    pub left_setting: Setting,
    pub right_setting: Setting,
    pub left_n: usize,
    pub right_n: usize,
    pub left_mean: Option<f64>,
    pub right_mean: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
    pub significant: Option<bool>,
    pub cohens_d: Option<f64>,
    pub note: Option<String>,
}

/// One grouping's rows plus warnings for omitted cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub rows: Vec<AnalysisResult>,
    pub warnings: Vec<String>,
}

/// All tables a run emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisTables {
    pub by_trait: Vec<AnalysisResult>,
    pub by_dialect: Vec<AnalysisResult>,
    pub by_topic: Vec<AnalysisResult>,
    pub by_setting: Vec<AnalysisResult>,
    pub by_model: Vec<AnalysisResult>,
    pub setting_comparison: Vec<SettingComparison>,
    pub warnings: Vec<String>,
}

/// Group key of a sample under one grouping; `None` excludes the sample
/// (topic grouping over unlabeled samples).
fn cell_key(
    group_by: GroupBy,
    backend_id: &str,
    task: TaskKind,
    setting: Setting,
    trait_name: &str,
    dialect: DialectCode,
    topic: Option<&str>,
) -> Option<(String, TaskKind, Option<Setting>, String)> {
    let (setting_col, key) = match group_by {
        GroupBy::Trait => (Some(setting), trait_name.to_string()),
        GroupBy::Dialect => (Some(setting), dialect.to_string()),
        GroupBy::Topic => (Some(setting), topic?.to_string()),
        GroupBy::Setting => (Some(setting), setting.to_string()),
        GroupBy::Model => (None, backend_id.to_string()),
    };
    Some((backend_id.to_string(), task, setting_col, key))
}

#[derive(Default)]
struct CellAccum {
    scores: Vec<f64>,
    n_rejected: usize,
    n_degenerate: usize,
    n_failed: usize,
}

impl CellAccum {
    fn issued(&self) -> usize {
        self.scores.len() + self.n_rejected + self.n_degenerate + self.n_failed
    }
}

fn setting_name(setting: Option<Setting>) -> String {
    setting.map_or_else(|| "-".to_string(), |s| s.to_string())
}

/// Builds one grouping's table. Cells without a single scored sample are
/// omitted and reported as warnings.
pub fn aggregate(
    samples: &[BiasSample],
    failed: &[TrialRef],
    group_by: GroupBy,
    stats_cfg: &StatsConfig,
    run_seed: u64,
) -> Result<AggregateTable> {
    let mut cells: BTreeMap<(String, TaskKind, Option<Setting>, String), CellAccum> = BTreeMap::new();
    for sample in samples {
        let Some(key) = cell_key(
            group_by,
            &sample.backend_id,
            sample.task,
            sample.setting,
            &sample.trait_name,
            sample.dialect,
            sample.topic.as_deref(),
        ) else {
            continue;
        };
        let accum = cells.entry(key).or_default();
        match sample.status {
            TrialStatus::Scored => accum.scores.push(sample.score.expect("scored sample has score")),
            TrialStatus::Rejected => accum.n_rejected += 1,
            TrialStatus::Degenerate => accum.n_degenerate += 1,
        }
    }
    for miss in failed {
        let Some(key) = cell_key(
            group_by,
            &miss.backend_id,
            miss.task,
            miss.setting,
            &miss.trait_name,
            miss.dialect,
            miss.topic.as_deref(),
        ) else {
            continue;
        };
        cells.entry(key).or_default().n_failed += 1;
    }

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for ((backend_id, task, setting, key), accum) in cells {
        if accum.scores.is_empty() {
            warnings.push(format!(
                "{group_by} table: cell ({backend_id}, {task}, {}, {key}) has no scored samples \
                 (rejected {}, degenerate {}, failed {}); omitted",
                setting_name(setting),
                accum.n_rejected,
                accum.n_degenerate,
                accum.n_failed
            ));
            continue;
        }
        rows.push(cell_row(group_by, key, backend_id, task, setting, accum, stats_cfg, run_seed)?);
    }
    if group_by == GroupBy::Topic {
        let unlabeled = samples.iter().filter(|s| s.topic.is_none()).count();
        if unlabeled > 0 {
            warnings.push(format!("topic table: {unlabeled} samples lack a topic label and were skipped"));
        }
    }
    Ok(AggregateTable { rows, warnings })
}

#[allow(clippy::too_many_arguments)]
fn cell_row(
    group_by: GroupBy,
    key: String,
    backend_id: String,
    task: TaskKind,
    setting: Option<Setting>,
    accum: CellAccum,
    stats_cfg: &StatsConfig,
    run_seed: u64,
) -> Result<AnalysisResult> {
    let scores = &accum.scores;
    let n = scores.len();
    let issued = accum.issued() as f64;
    let mean = scores.iter().sum::<f64>() / n as f64;

    let mut row = AnalysisResult {
        group_by,
        key: key.clone(),
        backend_id: backend_id.clone(),
        task,
        setting,
        n,
        n_rejected: accum.n_rejected,
        n_degenerate: accum.n_degenerate,
        n_failed: accum.n_failed,
        rejection_rate: accum.n_rejected as f64 / issued,
        degenerate_rate: accum.n_degenerate as f64 / issued,
        mean: Some(mean),
        ci_lo: None,
        ci_hi: None,
        t: None,
        df: None,
        p: None,
        significant_vs_zero: None,
        cohens_d: None,
        note: None,
    };
    if n < 2 {
        row.note = Some("fewer than 2 scored samples; mean only".into());
        return Ok(row);
    }

    let label = format!("{group_by}|{backend_id}|{task}|{}|{key}", setting_name(setting));
    let mut rng = stream_rng(splitmix64(run_seed ^ fnv1a64(label.as_bytes())), Stream::Bootstrap);
    let interval = stats::bootstrap_ci(scores, stats_cfg.ci_level, stats_cfg.bootstrap_resamples, &mut rng)?;
    row.ci_lo = Some(interval.lo);
    row.ci_hi = Some(interval.hi);

    let spread = scores.iter().any(|s| *s != scores[0]);
    if spread {
        let test = stats::one_sample_t(scores, 0.0)?;
        row.t = Some(test.statistic);
        row.df = Some(test.df);
        row.p = Some(test.p_value);
        row.significant_vs_zero = Some(test.p_value < stats_cfg.p_threshold_vs_zero);
        row.cohens_d = Some(stats::cohens_d_one_sample(scores, 0.0)?);
    } else {
        row.note = Some(if mean == 0.0 {
            "zero variance at zero mean; t and d undefined".into()
        } else {
            format!("zero variance: every score is {mean}; t and d unbounded")
        });
    }
    Ok(row)
}

/// Welch tests between every pair of settings present per (backend, task).
pub fn setting_comparisons(
    samples: &[BiasSample],
    stats_cfg: &StatsConfig,
) -> Result<Vec<SettingComparison>> {
    let mut groups: BTreeMap<(String, TaskKind), BTreeMap<Setting, Vec<f64>>> = BTreeMap::new();
    for sample in samples {
        if sample.status != TrialStatus::Scored {
            continue;
        }
        groups
            .entry((sample.backend_id.clone(), sample.task))
            .or_default()
            .entry(sample.setting)
            .or_default()
            .push(sample.score.expect("scored sample has score"));
    }

    let mut rows = Vec::new();
    for ((backend_id, task), by_setting) in groups {
        let settings: Vec<(&Setting, &Vec<f64>)> = by_setting.iter().collect();
        for i in 0..settings.len() {
            for j in (i + 1)..settings.len() {
                let (left, left_scores) = settings[i];
                let (right, right_scores) = settings[j];
                let mut row = SettingComparison {
                    backend_id: backend_id.clone(),
                    task,
                    left_setting: *left,
                    right_setting: *right,
                    left_n: left_scores.len(),
                    right_n: right_scores.len(),
                    left_mean: mean_of(left_scores),
                    right_mean: mean_of(right_scores),
                    t: None,
                    df: None,
                    p: None,
                    significant: None,
                    cohens_d: None,
                    note: None,
                };
                if left_scores.len() < 2 || right_scores.len() < 2 {
                    row.note = Some("fewer than 2 scored samples on a side; means only".into());
                } else if constant(left_scores) && constant(right_scores) {
                    row.note = Some("zero variance in both settings; t undefined".into());
                } else {
                    let test = stats::independent_t(left_scores, right_scores)?;
                    row.t = Some(test.statistic);
                    row.df = Some(test.df);
                    row.p = Some(test.p_value);
                    row.significant = Some(test.p_value < stats_cfg.p_threshold_between);
                    row.cohens_d = Some(stats::cohens_d_two_sample(left_scores, right_scores)?);
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn constant(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

/// Runs every grouping and the setting comparisons.
pub fn aggregate_all(
    samples: &[BiasSample],
    failed: &[TrialRef],
    stats_cfg: &StatsConfig,
    run_seed: u64,
) -> Result<AnalysisTables> {
    let mut warnings = Vec::new();
    let mut table = |group_by| -> Result<Vec<AnalysisResult>> {
        let t = aggregate(samples, failed, group_by, stats_cfg, run_seed)?;
        warnings.extend(t.warnings);
        Ok(t.rows)
    };
    let by_trait = table(GroupBy::Trait)?;
    let by_dialect = table(GroupBy::Dialect)?;
    let by_topic = table(GroupBy::Topic)?;
    let by_setting = table(GroupBy::Setting)?;
    let by_model = table(GroupBy::Model)?;
    let setting_comparison = setting_comparisons(samples, stats_cfg)?;
    Ok(AnalysisTables {
        by_trait,
        by_dialect,
        by_topic,
        by_setting,
        by_model,
        setting_comparison,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FallbackMode;
    use rand::Rng;

    fn sample(
        backend: &str,
        task: TaskKind,
        setting: Setting,
        trait_name: &str,
        dialect: DialectCode,
        score: Option<f64>,
        status: TrialStatus,
    ) -> BiasSample {
        BiasSample {
            request_id: format!("t{:06}", rand::random::<u16>()),
            backend_id: backend.into(),
            task,
            setting,
            trait_name: trait_name.into(),
            dialect,
            scenario_id: None,
            text_pair_id: None,
            topic: None,
            fallback_mode: FallbackMode::Forced,
            status,
            score,
            reject_reason: None,
            reject_detail: None,
            flag: None,
            counts: None,
        }
    }

    fn scored(score: f64) -> BiasSample {
        sample(
            "m",
            TaskKind::Association,
            Setting::Naming,
            "careless",
            DialectCode::Nds,
            Some(score),
            TrialStatus::Scored,
        )
    }

    #[test]
    fn constant_positive_cell_reports_tight_interval_and_note() {
        let samples: Vec<BiasSample> = (0..20).map(|_| scored(1.0)).collect();
        let table =
            aggregate(&samples, &[], GroupBy::Trait, &StatsConfig::default(), 7).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.key, "careless");
        assert_eq!(row.mean, Some(1.0));
        assert_eq!((row.ci_lo, row.ci_hi), (Some(1.0), Some(1.0)));
        assert_eq!(row.t, None);
        assert!(row.note.as_deref().unwrap().contains("zero variance"));
        assert_eq!(row.rejection_rate, 0.0);
    }

    #[test]
    fn uniform_random_cell_is_near_zero_and_not_significant() {
        let mut rng = stream_rng(99, Stream::MockReply);
        let samples: Vec<BiasSample> = (0..1000)
            .map(|_| scored(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }))
            .collect();
        let cfg = StatsConfig::default();
        let table = aggregate(&samples, &[], GroupBy::Dialect, &cfg, 7).unwrap();
        let row = &table.rows[0];
        assert!(row.mean.unwrap().abs() <= 0.05, "mean {}", row.mean.unwrap());
        assert_eq!(row.significant_vs_zero, Some(false));
        assert!(row.p.unwrap() >= cfg.p_threshold_vs_zero);
    }

    #[test]
    fn single_sample_cell_reports_mean_only() {
        let samples = vec![scored(0.6)];
        let table = aggregate(&samples, &[], GroupBy::Trait, &StatsConfig::default(), 7).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.mean, Some(0.6));
        assert_eq!(row.ci_lo, None);
        assert_eq!(row.t, None);
        assert!(row.note.as_deref().unwrap().contains("fewer than 2"));
    }

    #[test]
    fn cell_without_scored_samples_becomes_a_warning() {
        let mut rejected = scored(0.0);
        rejected.status = TrialStatus::Rejected;
        rejected.score = None;
        let table =
            aggregate(&[rejected], &[], GroupBy::Trait, &StatsConfig::default(), 7).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.warnings.len(), 1);
        assert!(table.warnings[0].contains("no scored samples"), "{}", table.warnings[0]);
    }

    #[test]
    fn failed_trials_count_into_their_cell() {
        let samples: Vec<BiasSample> = (0..3).map(|_| scored(1.0)).collect();
        let failed = vec![TrialRef {
            request_id: "t000009".into(),
            backend_id: "m".into(),
            task: TaskKind::Association,
            setting: Setting::Naming,
            trait_name: "careless".into(),
            dialect: DialectCode::Nds,
            topic: None,
        }];
        let table =
            aggregate(&samples, &failed, GroupBy::Trait, &StatsConfig::default(), 7).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.n_failed, 1);
        assert_eq!(row.rejection_rate, 0.0);
        assert_eq!(row.n, 3);
    }

    #[test]
    fn topic_grouping_skips_unlabeled_samples_with_warning() {
        let mut labeled = scored(0.5);
        labeled.topic = Some("History & Historical Geography".into());
        let labeled2 = {
            let mut s = scored(0.7);
            s.topic = labeled.topic.clone();
            s
        };
        let unlabeled = scored(0.1);
        let table = aggregate(
            &[labeled, labeled2, unlabeled],
            &[],
            GroupBy::Topic,
            &StatsConfig::default(),
            7,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].n, 2);
        assert!(table.warnings.iter().any(|w| w.contains("lack a topic label")));
    }

    #[test]
    fn aggregation_is_deterministic() {
        let mut rng = stream_rng(5, Stream::MockReply);
        let samples: Vec<BiasSample> =
            (0..50).map(|_| scored(rng.gen_range(-10..=10) as f64 / 10.0)).collect();
        let a = aggregate(&samples, &[], GroupBy::Trait, &StatsConfig::default(), 42).unwrap();
        let b = aggregate(&samples, &[], GroupBy::Trait, &StatsConfig::default(), 42).unwrap();
        assert_eq!(serde_json::to_string(&a.rows).unwrap(), serde_json::to_string(&b.rows).unwrap());
    }

    #[test]
    fn setting_comparison_detects_separated_cells() {
        let mut rng = stream_rng(11, Stream::MockReply);
        let mut samples = Vec::new();
        for _ in 0..100 {
            samples.push(scored(1.0));
            let mut usage = scored(if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
            usage.setting = Setting::Usage;
            samples.push(usage);
        }
        let rows = setting_comparisons(&samples, &StatsConfig::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!((row.left_setting, row.right_setting), (Setting::Naming, Setting::Usage));
        assert_eq!(row.left_mean, Some(1.0));
        assert_eq!(row.significant, Some(true));
        assert!(row.p.unwrap() < 0.05);
    }

    #[test]
    fn setting_comparison_handles_double_constant_cells() {
        let mut samples = Vec::new();
        for _ in 0..5 {
            samples.push(scored(1.0));
            let mut usage = scored(1.0);
            usage.setting = Setting::Usage;
            samples.push(usage);
        }
        let rows = setting_comparisons(&samples, &StatsConfig::default()).unwrap();
        assert_eq!(rows[0].t, None);
        assert!(rows[0].note.as_deref().unwrap().contains("zero variance"));
    }

    #[test]
    fn model_grouping_spans_settings() {
        let naming = scored(1.0);
        let mut usage = scored(0.0);
        usage.setting = Setting::Usage;
        let table =
            aggregate(&[naming, usage], &[], GroupBy::Model, &StatsConfig::default(), 7).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].setting, None);
        assert_eq!(table.rows[0].n, 2);
        assert_eq!(table.rows[0].mean, Some(0.5));
    }
}

//! Run orchestration: configuration, trial planning, execution, scoring,
//! aggregation, and report emission.

pub mod aggregate;
pub mod config;
pub mod exec;
pub mod marked;
pub mod plan;
pub mod report;

pub use aggregate::{aggregate, aggregate_all, AnalysisResult, AnalysisTables, GroupBy, SettingComparison, TrialRef};
pub use config::{BackendConfig, BackendKind, MockPolicyName, NoiseConfig, RunConfig, StatsConfig};
pub use exec::{analyze, execute, load_manifest, load_samples, load_transcript, load_trials, score_run, Manifest, RunArtifacts};
pub use marked::{run_marked_words, split_profiles, MarkedSummary};
pub use plan::{build_plan, PlanSummary};
pub use report::{render_summary, write_tables};

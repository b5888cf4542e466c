//! Command-line interface: plan, run, analyze, profile, and self-check
//! dialect bias audits described by a YAML or JSON config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dialect_audit::corpus::{noise_text_with_stats, NoiseParams};
use dialect_audit::runner::{
    aggregate_all, analyze, build_plan, execute, load_manifest, load_samples, load_trials,
    render_summary, run_marked_words, write_tables, PlanSummary, RunArtifacts, RunConfig, TrialRef,
};
use dialect_audit::seeds::{stream_rng, Stream};
use dialect_audit::Result;

#[derive(Parser)]
#[command(name = "dialect-audit", version, about = "Dialect bias auditing harness for chat-completion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a config into its trial plan and print the counts.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Also write the full instance list as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a run end to end; reuses answers already in the transcripts.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rescore a run directory from its transcripts and rewrite all tables.
    Analyze {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Lexical profile of decision responses per (backend, trait, dialect).
    MarkedWords {
        #[arg(long)]
        run_dir: PathBuf,
        /// Prior mass; defaults to the prior corpus total.
        #[arg(long)]
        alpha0: Option<f64>,
        /// |z| significance cutoff; defaults to the run's configured value.
        #[arg(long)]
        z_threshold: Option<f64>,
    },
    /// Re-emit and print the aggregated tables of a finished run.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Self-check of the noise injector on synthetic text.
    NoiseAudit {
        #[arg(long, default_value_t = 10_000)]
        words: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Word list file (one word per line); defaults to the bundled list.
        #[arg(long)]
        wordlist: Option<PathBuf>,
    },
}

fn print_artifacts(artifacts: &RunArtifacts, ceiling: f64) -> ExitCode {
    println!(
        "trials {} | issued {} | scored {} | rejected {} | degenerate {} | failed {}",
        artifacts.plan_len,
        artifacts.issued,
        artifacts.scored,
        artifacts.rejected,
        artifacts.degenerate,
        artifacts.failed
    );
    println!(
        "rejection rate {:.4} (ceiling {:.4}) | results: {} | analysis: {}",
        artifacts.rejection_rate,
        ceiling,
        artifacts.results_path.display(),
        artifacts.analysis_dir.display()
    );
    for warning in &artifacts.tables.warnings {
        println!("warning: {warning}");
    }
    if artifacts.rejection_rate < ceiling {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "rejection rate {:.4} reached the configured ceiling {:.4}",
            artifacts.rejection_rate, ceiling
        );
        ExitCode::FAILURE
    }
}

fn cmd_plan(config_path: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let config = RunConfig::load(config_path)?;
    let lexicon = config.lexicon()?;
    let corpus = config.corpus()?;
    let noise = config.noise_params()?;
    let plan = build_plan(&config, &lexicon, corpus.as_deref(), &noise)?;
    let summary = PlanSummary::of(&plan);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(out) = out {
        dialect_audit::runner::exec::write_trials(out, &plan)?;
        println!("wrote {} instances to {}", plan.len(), out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(config_path: &Path) -> Result<ExitCode> {
    let config = RunConfig::load(config_path)?;
    let artifacts = execute(&config)?;
    Ok(print_artifacts(&artifacts, config.rejection_ceiling))
}

fn cmd_analyze(run_dir: &Path) -> Result<ExitCode> {
    let manifest = load_manifest(run_dir)?;
    let artifacts = analyze(run_dir)?;
    Ok(print_artifacts(&artifacts, manifest.config.rejection_ceiling))
}

fn cmd_marked_words(run_dir: &Path, alpha0: Option<f64>, z_threshold: Option<f64>) -> Result<ExitCode> {
    let summary = run_marked_words(run_dir, alpha0, z_threshold)?;
    for cell in &summary.cells {
        println!(
            "{} / {} / {}: {} dialect-role and {} standard-role profiles, {} marked tokens -> {}",
            cell.backend_id,
            cell.trait_name,
            cell.dialect,
            cell.dialect_docs,
            cell.standard_docs,
            cell.marked_tokens,
            cell.csv_path.display()
        );
    }
    if summary.skipped_unsplittable > 0 {
        println!("skipped {} responses without a recognizable profile pair", summary.skipped_unsplittable);
    }
    Ok(ExitCode::SUCCESS)
}

/// Rebuilds tables from stored results without touching transcripts; failure
/// counts are recovered from the gap between the plan and stored samples.
fn cmd_report(run_dir: &Path) -> Result<ExitCode> {
    let manifest = load_manifest(run_dir)?;
    let plan = load_trials(&run_dir.join("trials.jsonl"))?;
    let mut samples = load_samples(&run_dir.join("results.jsonl"))?;
    samples.extend(load_samples(&run_dir.join("rejections.jsonl"))?);

    let present: HashSet<(&str, &str)> =
        samples.iter().map(|s| (s.backend_id.as_str(), s.request_id.as_str())).collect();
    let mut failed = Vec::new();
    for backend in &manifest.config.backends {
        for instance in &plan {
            if !present.contains(&(backend.id.as_str(), instance.request_id.as_str())) {
                failed.push(TrialRef::of(instance, &backend.id));
            }
        }
    }

    let tables = aggregate_all(&samples, &failed, &manifest.config.stats, manifest.config.seed)?;
    write_tables(&run_dir.join("analysis"), &tables, &samples)?;
    print!("{}", render_summary(&tables));
    Ok(ExitCode::SUCCESS)
}

fn cmd_noise_audit(words: usize, seed: u64, wordlist: Option<&Path>) -> Result<ExitCode> {
    let params = match wordlist {
        Some(path) => NoiseParams::default().with_wordlist(path)?,
        None => NoiseParams::default(),
    };
    let text: Vec<&str> = params.common_words.iter().map(String::as_str).cycle().take(words).collect();
    let text = text.join(" ");
    let mut pass = true;

    let (_, stats) = noise_text_with_stats(&text, &params, &mut stream_rng(seed, Stream::Noise));
    let fraction = stats.words_altered as f64 / stats.words_total as f64;
    let fraction_ok = (fraction - params.word_alter_prob).abs() <= 0.05;
    pass &= fraction_ok;
    println!(
        "altered fraction: {fraction:.4} over {} words (target {}, char ops {}, word ops {}) .. {}",
        stats.words_total,
        params.word_alter_prob,
        stats.char_ops,
        stats.word_ops,
        if fraction_ok { "ok" } else { "FAIL" }
    );

    let silent = NoiseParams { word_alter_prob: 0.0, ..params.clone() };
    let (unchanged, _) = noise_text_with_stats(&text, &silent, &mut stream_rng(seed, Stream::Noise));
    let identity_ok = unchanged == text;
    pass &= identity_ok;
    println!("zero-probability identity .. {}", if identity_ok { "ok" } else { "FAIL" });

    let word_only = NoiseParams { word_alter_prob: 1.0, char_vs_word_prob: 0.0, ..params.clone() };
    let sample: Vec<&str> = params.common_words.iter().map(String::as_str).cycle().take(2000).collect();
    let sample = sample.join(" ");
    let (noised, _) = noise_text_with_stats(&sample, &word_only, &mut stream_rng(seed, Stream::Noise));
    let known: HashSet<&str> = params.common_words.iter().map(String::as_str).collect();
    let membership_ok = noised.split_whitespace().all(|w| known.contains(w));
    pass &= membership_ok;
    println!(
        "word-level output stays within the word list .. {}",
        if membership_ok { "ok" } else { "FAIL" }
    );

    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Plan { config, out } => cmd_plan(config, out.as_deref()),
        Command::Run { config } => cmd_run(config),
        Command::Analyze { run_dir } => cmd_analyze(run_dir),
        Command::MarkedWords { run_dir, alpha0, z_threshold } => {
            cmd_marked_words(run_dir, *alpha0, *z_threshold)
        }
        Command::Report { run_dir } => cmd_report(run_dir),
        Command::NoiseAudit { words, seed, wordlist } => {
            cmd_noise_audit(*words, *seed, wordlist.as_deref())
        }
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

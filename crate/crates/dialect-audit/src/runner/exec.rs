//! Run execution: dispatches the plan against each backend with a bounded
//! worker pool, persists transcripts for resume and replay, then scores
//! every response in plan order. The transcript files are the only shared
//! mutable state; all downstream stages are deterministic.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{extract_decision, Client, CompletionRequest};
use crate::corpus::{TextPair, TopicClusters, TopicLabel};
use crate::lexicon::Origin;
use crate::prompting::PromptInstance;
use crate::runner::aggregate::{aggregate_all, AnalysisTables, TrialRef};
use crate::runner::config::RunConfig;
use crate::runner::plan::build_plan;
use crate::runner::report;
use crate::scoring::{score_association_response, score_decision_extraction, BiasSample, TrialStatus};
use crate::seeds::{fnv1a64, splitmix64};
use crate::{Error, Result, TaskKind};

/// One line of a backend transcript. Error lines mark attempts that died in
/// transport; they are retried on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a finished run leaves on disk, with headline counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub created_at_epoch_s: u64,
    pub crate_version: String,
    pub seed: u64,
    pub plan_len: usize,
    pub extractor_temperature: f64,
    pub extractor_retries: u32,
    pub config: RunConfig,
}

/// Paths and counts describing one executed (or analyzed) run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub trials_path: PathBuf,
    pub results_path: PathBuf,
    pub rejections_path: PathBuf,
    pub analysis_dir: PathBuf,
    pub plan_len: usize,
    pub issued: usize,
    pub scored: usize,
    pub rejected: usize,
    pub degenerate: usize,
    pub failed: usize,
    pub rejection_rate: f64,
    pub tables: AnalysisTables,
}

fn run_paths(run_dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf, PathBuf) {
    (
        run_dir.join("manifest.json"),
        run_dir.join("trials.jsonl"),
        run_dir.join("results.jsonl"),
        run_dir.join("rejections.jsonl"),
        run_dir.join("analysis"),
    )
}

fn transcript_path(run_dir: &Path, backend_id: &str) -> PathBuf {
    run_dir.join("transcripts").join(format!("{backend_id}.jsonl"))
}

/// Writes the plan as one JSON object per line.
pub fn write_trials(path: &Path, plan: &[PromptInstance]) -> Result<()> {
    let mut writer = BufWriter::new(std::fs::File::create(path)?);
    for instance in plan {
        serde_json::to_writer(&mut writer, instance)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_trials(path: &Path) -> Result<Vec<PromptInstance>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut plan = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        plan.push(serde_json::from_str(&line)?);
    }
    Ok(plan)
}

/// Ordered sample writer shared by results and rejections files.
fn write_samples(path: &Path, samples: &[&BiasSample]) -> Result<()> {
    let mut writer = BufWriter::new(std::fs::File::create(path)?);
    for sample in samples {
        serde_json::to_writer(&mut writer, sample)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<BiasSample>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut samples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line)?);
    }
    Ok(samples)
}

/// Replies by request id; error-only attempts are absent. Later lines win so
/// a retried request keeps its final answer.
pub fn load_transcript(path: &Path) -> Result<HashMap<String, String>> {
    let mut replies = HashMap::new();
    if !path.exists() {
        return Ok(replies);
    }
    let reader = BufReader::new(std::fs::File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(&line)?;
        if let Some(raw_text) = parsed.raw_text {
            replies.insert(parsed.request_id, raw_text);
        }
    }
    Ok(replies)
}

/// Mock-context payloads borrowed per trial during dispatch.
struct MockSidecar {
    adjectives: Option<Vec<(String, Origin)>>,
    concepts: Option<crate::backend::MockConcepts>,
    seed: u64,
}

fn mock_sidecar(instance: &PromptInstance, backend_id: &str) -> MockSidecar {
    let adjectives = instance
        .adjectives
        .as_ref()
        .map(|items| items.iter().map(|a| (a.word.clone(), a.origin)).collect());
    let concepts = instance.concepts.as_ref().map(|draw| {
        let (slot1, slot2) = draw.slots();
        crate::backend::MockConcepts {
            slot1: slot1.to_string(),
            slot2: slot2.to_string(),
            slot1_is_stereotypical: !draw.swap_slots,
        }
    });
    // Folding the backend id in decorrelates replies of co-audited mocks.
    let seed = splitmix64(instance.seed ^ fnv1a64(backend_id.as_bytes()));
    MockSidecar { adjectives, concepts, seed }
}

/// Sends every not-yet-answered instance to one backend. Returns the number
/// of requests attempted in this call.
pub fn dispatch(
    plan: &[PromptInstance],
    client: &Client,
    path: &Path,
    concurrency: usize,
    temperature: f64,
    max_tokens: u32,
) -> Result<usize> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let done = load_transcript(path)?;
    let todo: Vec<&PromptInstance> =
        plan.iter().filter(|i| !done.contains_key(&i.request_id)).collect();
    if todo.is_empty() {
        return Ok(0);
    }

    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let writer = Mutex::new(BufWriter::new(file));
    let cursor = AtomicUsize::new(0);
    let io_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let is_mock = matches!(client, Client::Mock(_));
    let workers = concurrency.min(todo.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = cursor.fetch_add(1, Ordering::Relaxed);
                if idx >= todo.len() || io_error.lock().expect("io_error lock").is_some() {
                    break;
                }
                let instance = todo[idx];
                let mut request =
                    CompletionRequest::user(client.model_id(), &instance.request_id, &instance.rendered_text);
                request.temperature = temperature;
                request.max_tokens = max_tokens;

                let sidecar = is_mock.then(|| mock_sidecar(instance, client.id()));
                let ctx = sidecar.as_ref().map(|s| crate::backend::MockContext {
                    task: instance.task,
                    dialect_letter: instance.writer_map.dialect_letter(),
                    adjectives: s.adjectives.as_deref(),
                    concepts: s.concepts.clone(),
                    seed: s.seed,
                });

                let line = match client.complete(&request, ctx.as_ref()) {
                    Ok(response) => TranscriptLine {
                        request_id: instance.request_id.clone(),
                        raw_text: Some(response.raw_text),
                        latency_ms: Some(response.latency_ms),
                        finish_reason: response.finish_reason,
                        error: None,
                    },
                    Err(err) => TranscriptLine {
                        request_id: instance.request_id.clone(),
                        raw_text: None,
                        latency_ms: None,
                        finish_reason: None,
                        error: Some(err.to_string()),
                    },
                };
                let serialized = serde_json::to_string(&line).expect("transcript line serializes");
                let mut guard = writer.lock().expect("writer lock");
                // Per-line flush keeps the transcript resumable after a kill.
                if let Err(err) = writeln!(guard, "{serialized}").and_then(|()| guard.flush()) {
                    *io_error.lock().expect("io_error lock") = Some(err);
                    break;
                }
            });
        }
    });

    if let Some(err) = io_error.into_inner().expect("io_error lock") {
        return Err(Error::Io(err));
    }
    Ok(todo.len())
}

/// Scores every answered trial in (backend, plan) order. Unanswered trials
/// come back as failed references for aggregation bookkeeping.
pub fn score_run(
    plan: &[PromptInstance],
    backend_ids: &[String],
    transcripts: &HashMap<String, HashMap<String, String>>,
    extractor: Option<&Client>,
) -> Result<(Vec<BiasSample>, Vec<TrialRef>)> {
    let mut samples = Vec::new();
    let mut failed = Vec::new();
    for backend_id in backend_ids {
        let replies = transcripts.get(backend_id);
        for instance in plan {
            let Some(raw_text) = replies.and_then(|map| map.get(&instance.request_id)) else {
                failed.push(TrialRef::of(instance, backend_id));
                continue;
            };
            let outcome = match instance.task {
                TaskKind::Association => score_association_response(instance, raw_text)?,
                TaskKind::Decision => {
                    let draw = instance.concepts.as_ref().ok_or_else(|| {
                        Error::schema("concepts", format!("decision trial `{}` lacks concepts", instance.request_id))
                    })?;
                    let (slot1, slot2) = draw.slots();
                    let extraction =
                        extract_decision(raw_text, slot1, slot2, extractor, &instance.request_id)?;
                    score_decision_extraction(instance, extraction.decision.as_ref())?
                }
            };
            samples.push(BiasSample::from_outcome(instance, backend_id, outcome));
        }
    }
    Ok((samples, failed))
}

/// Labels topics for corpus pairs that lack them, caching results so a
/// resumed run never re-queries. Returns how many labels were newly fetched.
pub fn ensure_topics(
    corpus: &mut [TextPair],
    labeler: &Client,
    clusters: &TopicClusters,
    cache_path: &Path,
) -> Result<usize> {
    let mut cache: BTreeMap<String, TopicLabel> = if cache_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(cache_path)?)?
    } else {
        BTreeMap::new()
    };
    let mut fetched = 0;
    for pair in corpus.iter_mut() {
        if pair.topic.is_some() {
            continue;
        }
        if !cache.contains_key(&pair.id) {
            // The standard text carries the same topic and labels reliably.
            let label = crate::corpus::label_topic(
                &pair.standard_text,
                labeler,
                clusters,
                &format!("topic.{}", pair.id),
            )?;
            cache.insert(pair.id.clone(), label);
            std::fs::write(cache_path, serde_json::to_string_pretty(&cache)?)?;
            fetched += 1;
        }
        pair.topic = Some(cache[&pair.id].cluster.clone());
    }
    Ok(fetched)
}

fn now_epoch_s() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Plans, dispatches, scores, aggregates, and writes every artifact.
pub fn execute(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let lexicon = config.lexicon()?;
    let noise = config.noise_params()?;
    let run_dir = config.run_dir();
    std::fs::create_dir_all(&run_dir)?;

    let mut corpus = config.corpus()?;
    if let (Some(corpus), Some(labeler_cfg)) = (corpus.as_mut(), &config.topic_labeler) {
        if corpus.iter().any(|p| p.topic.is_none()) {
            let labeler = labeler_cfg.build_client()?;
            let clusters = config.topic_clusters()?;
            ensure_topics(corpus, &labeler, &clusters, &run_dir.join("topics.json"))?;
        }
    }

    let plan = build_plan(config, &lexicon, corpus.as_deref(), &noise)?;
    let (manifest_path, trials_path, _, _, _) = run_paths(&run_dir);
    let manifest = Manifest {
        run_id: config.run_id.clone(),
        created_at_epoch_s: now_epoch_s(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        plan_len: plan.len(),
        extractor_temperature: crate::backend::EXTRACTOR_TEMPERATURE,
        extractor_retries: crate::backend::EXTRACTOR_RETRIES,
        config: config.clone(),
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    write_trials(&trials_path, &plan)?;

    for backend_cfg in &config.backends {
        let client = backend_cfg.build_client()?;
        dispatch(
            &plan,
            &client,
            &transcript_path(&run_dir, &backend_cfg.id),
            config.concurrency,
            config.effective_temperature(),
            config.max_tokens,
        )?;
    }

    score_and_emit(config, &run_dir, &plan)
}

/// Rescores transcripts already on disk and rewrites results and tables.
/// Used by `run` after dispatch and by `analyze` standalone.
pub fn score_and_emit(config: &RunConfig, run_dir: &Path, plan: &[PromptInstance]) -> Result<RunArtifacts> {
    let (manifest_path, trials_path, results_path, rejections_path, analysis_dir) = run_paths(run_dir);
    let backend_ids: Vec<String> = config.backends.iter().map(|b| b.id.clone()).collect();
    let mut transcripts = HashMap::new();
    for id in &backend_ids {
        transcripts.insert(id.clone(), load_transcript(&transcript_path(run_dir, id))?);
    }
    let extractor = match &config.extractor {
        Some(cfg) => Some(cfg.build_client()?),
        None => None,
    };

    let (samples, failed) = score_run(plan, &backend_ids, &transcripts, extractor.as_ref())?;

    let kept: Vec<&BiasSample> =
        samples.iter().filter(|s| s.status != TrialStatus::Rejected).collect();
    let rejected: Vec<&BiasSample> =
        samples.iter().filter(|s| s.status == TrialStatus::Rejected).collect();
    write_samples(&results_path, &kept)?;
    write_samples(&rejections_path, &rejected)?;

    let tables = aggregate_all(&samples, &failed, &config.stats, config.seed)?;
    std::fs::create_dir_all(&analysis_dir)?;
    report::write_tables(&analysis_dir, &tables, &samples)?;

    let issued = plan.len() * backend_ids.len();
    let scored = samples.iter().filter(|s| s.status == TrialStatus::Scored).count();
    let degenerate = samples.iter().filter(|s| s.status == TrialStatus::Degenerate).count();
    let rejected_n = rejected.len();
    Ok(RunArtifacts {
        run_dir: run_dir.to_path_buf(),
        manifest_path,
        trials_path,
        results_path,
        rejections_path,
        analysis_dir,
        plan_len: plan.len(),
        issued,
        scored,
        rejected: rejected_n,
        degenerate,
        failed: failed.len(),
        rejection_rate: if issued == 0 { 0.0 } else { rejected_n as f64 / issued as f64 },
        tables,
    })
}

/// Loads a finished run's manifest and trial log, then rescores and
/// re-emits. The manifest alone carries everything needed.
pub fn analyze(run_dir: &Path) -> Result<RunArtifacts> {
    let (manifest_path, trials_path, _, _, _) = run_paths(run_dir);
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    let plan = load_trials(&trials_path)?;
    score_and_emit(&manifest.config, run_dir, &plan)
}

pub fn load_manifest(run_dir: &Path) -> Result<Manifest> {
    let (manifest_path, ..) = run_paths(run_dir);
    Ok(serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?)
}

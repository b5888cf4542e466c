//! End-to-end runner checks on mock backends: full audits over every task
//! and setting, transcript replay, crash-resume equivalence, topic labeling,
//! marked-words emission, and the extractor fallback for loose replies.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use dialect_audit::backend::{Client, MockBackend, MockPolicy};
use dialect_audit::corpus::{save_corpus, DialectCode, NoiseParams, TextPair};
use dialect_audit::lexicon::Lexicon;
use dialect_audit::runner::{
    build_plan, execute, run_marked_words, score_run, BackendConfig, MockPolicyName, RunConfig,
};
use dialect_audit::scoring::TrialStatus;
use dialect_audit::{Role, TaskKind};

const TOPIC: &str = "History & Historical Geography";

fn write_corpus(path: &Path, with_topics: bool) {
    let mut pairs = Vec::new();
    for (i, dialect) in [DialectCode::Bar, DialectCode::Als].into_iter().enumerate() {
        for j in 0..2 {
            pairs.push(TextPair {
                id: format!("pair-{dialect}-{j}"),
                dialect,
                dialect_text: format!(
                    "De oide Stod {i}{j} hod scho vui gsehng und dazäin kenna davo."
                ),
                standard_text: format!(
                    "Die alte Stadt {i}{j} hat schon viel gesehen und könnte davon erzählen."
                ),
                topic: with_topics.then(|| TOPIC.to_string()),
            });
        }
    }
    save_corpus(&pairs, path).expect("corpus written");
}

fn base_config(root: &Path, run_id: &str) -> RunConfig {
    let corpus_path = root.join("corpus.jsonl");
    RunConfig {
        run_id: run_id.into(),
        seed: 77,
        backends: vec![BackendConfig::mock("m1", MockPolicyName::Stereotypical)],
        traits: Some(vec!["careless".into(), "uneducated".into()]),
        dialects: Some(vec![DialectCode::Bar, DialectCode::Als]),
        trials_per_condition: 2,
        concurrency: 3,
        corpus_path: Some(corpus_path),
        output_dir: root.join("out"),
        ..RunConfig::default()
    }
}

/// Every deterministic artifact two equivalent runs must agree on.
const COMPARED: [&str; 12] = [
    "results.jsonl",
    "rejections.jsonl",
    "analysis/trait.json",
    "analysis/trait.csv",
    "analysis/dialect.json",
    "analysis/dialect.csv",
    "analysis/topic.json",
    "analysis/topic.csv",
    "analysis/setting_comparison.json",
    "analysis/setting_comparison.csv",
    "analysis/samples_long.csv",
    "analysis/warnings.txt",
];

fn assert_identical_artifacts(left: &Path, right: &Path) {
    for rel in COMPARED {
        let a = fs::read(left.join(rel)).unwrap_or_else(|e| panic!("{rel} in {left:?}: {e}"));
        let b = fs::read(right.join(rel)).unwrap_or_else(|e| panic!("{rel} in {right:?}: {e}"));
        assert_eq!(a, b, "{rel} differs between {left:?} and {right:?}");
    }
}

fn scores_in(results_path: &Path) -> Vec<(String, Option<f64>)> {
    fs::read_to_string(results_path)
        .expect("results file")
        .lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).expect("sample line");
            (v["status"].as_str().expect("status").to_string(), v["score"].as_f64())
        })
        .collect()
}

#[test]
fn stereotypical_run_replays_byte_identically() {
    let dir = tempfile::tempdir().expect("tempdir");
    write_corpus(&dir.path().join("corpus.jsonl"), true);

    let config = base_config(dir.path(), "orig");
    let artifacts = execute(&config).expect("mock run completes");
    assert_eq!(artifacts.plan_len, 96, "plan covers both tasks and all three settings");
    assert_eq!(artifacts.issued, 96);
    assert_eq!((artifacts.rejected, artifacts.degenerate, artifacts.failed), (0, 0, 0));
    assert_eq!(artifacts.rejection_rate, 0.0);
    for (status, score) in scores_in(&artifacts.results_path) {
        assert_eq!(status, "scored");
        assert_eq!(score, Some(1.0), "stereotypical mock scores +1 everywhere");
    }

    // Replay the recorded transcript through a fresh run under the same
    // backend id; every deterministic artifact must match byte for byte.
    let transcript = artifacts.run_dir.join("transcripts").join("m1.jsonl");
    let mut replay_config = base_config(dir.path(), "replay");
    replay_config.output_dir = dir.path().join("out-replay");
    replay_config.run_id = config.run_id.clone();
    let mut replay_backend = BackendConfig::mock("m1", MockPolicyName::ScriptedReplay);
    replay_backend.transcript = Some(transcript);
    replay_config.backends = vec![replay_backend];

    let replayed = execute(&replay_config).expect("replay completes");
    assert_eq!(replayed.issued, 96);
    assert_eq!(replayed.rejected, 0);
    assert_identical_artifacts(&artifacts.run_dir, &replayed.run_dir);
}

#[test]
fn interrupted_run_resumes_to_the_uninterrupted_artifacts() {
    let dir = tempfile::tempdir().expect("tempdir");
    write_corpus(&dir.path().join("corpus.jsonl"), true);

    let mut reference_config = base_config(dir.path(), "full");
    reference_config.output_dir = dir.path().join("out-full");
    let reference = execute(&reference_config).expect("uninterrupted run");

    let mut resumed_config = base_config(dir.path(), "full");
    resumed_config.output_dir = dir.path().join("out-resumed");
    let first_pass = execute(&resumed_config).expect("first pass");

    // Simulate a crash: drop most of the transcript and all derived files,
    // keeping only the first 40 recorded replies.
    let transcript = first_pass.run_dir.join("transcripts").join("m1.jsonl");
    let kept: Vec<String> =
        fs::read_to_string(&transcript).expect("transcript").lines().take(40).map(String::from).collect();
    assert_eq!(kept.len(), 40);
    fs::write(&transcript, format!("{}\n", kept.join("\n"))).expect("truncate transcript");
    fs::remove_file(first_pass.run_dir.join("results.jsonl")).expect("drop results");
    fs::remove_file(first_pass.run_dir.join("rejections.jsonl")).expect("drop rejections");
    fs::remove_dir_all(first_pass.run_dir.join("analysis")).expect("drop analysis");

    let resumed = execute(&resumed_config).expect("resumed run");
    assert_eq!(resumed.issued, 96);
    assert_eq!(resumed.failed, 0, "resume re-issues the missing trials");
    let lines = fs::read_to_string(&transcript).expect("transcript after resume");
    assert_eq!(lines.lines().count(), 96, "only the 56 missing replies were re-issued");
    assert_identical_artifacts(&reference.run_dir, &resumed.run_dir);
}

#[test]
fn mixed_run_labels_topics_and_emits_every_table_family() {
    let dir = tempfile::tempdir().expect("tempdir");
    let corpus_path = dir.path().join("corpus.jsonl");
    write_corpus(&corpus_path, false);

    // The labeler is a scripted replay answering "history" for each pair.
    let labeler_transcript = dir.path().join("labeler.jsonl");
    let mut lines = String::new();
    for dialect in ["bar", "als"] {
        for j in 0..2 {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({"request_id": format!("topic.pair-{dialect}-{j}"), "raw_text": "history"})
            ));
        }
    }
    fs::write(&labeler_transcript, lines).expect("labeler transcript");

    let mut config = base_config(dir.path(), "mixed");
    config.backends = vec![
        BackendConfig::mock("m_stereo", MockPolicyName::Stereotypical),
        BackendConfig::mock("m_anti", MockPolicyName::AntiStereotypical),
    ];
    let mut labeler = BackendConfig::mock("labeler", MockPolicyName::ScriptedReplay);
    labeler.transcript = Some(labeler_transcript);
    config.topic_labeler = Some(labeler);

    let artifacts = execute(&config).expect("mixed run completes");
    assert_eq!(artifacts.issued, 192, "96 trials across two backends");
    assert_eq!(artifacts.rejected, 0);

    let topics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(artifacts.run_dir.join("topics.json")).expect("cache"))
            .expect("topic cache parses");
    assert_eq!(topics.as_object().expect("object").len(), 4, "every pair got labeled");

    let by_trait: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(artifacts.analysis_dir.join("trait.json")).expect("table"))
            .expect("trait table parses");
    assert!(!by_trait.is_empty());
    for row in &by_trait {
        let mean = row["mean"].as_f64().expect("mean");
        match row["backend_id"].as_str().expect("backend") {
            "m_stereo" => assert_eq!(mean, 1.0),
            "m_anti" => assert_eq!(mean, -1.0),
            other => panic!("unexpected backend {other}"),
        }
    }

    let by_topic: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(artifacts.analysis_dir.join("topic.json")).expect("table"))
            .expect("topic table parses");
    assert!(!by_topic.is_empty());
    for row in &by_topic {
        assert_eq!(row["key"].as_str().expect("key"), TOPIC, "labels resolve to the cluster");
    }
    let warnings = fs::read_to_string(artifacts.analysis_dir.join("warnings.txt")).expect("warnings");
    assert!(warnings.contains("lack a topic label"), "naming trials have no topic: {warnings}");

    // Decision replies feed the marked-words profiler: one cell per
    // (backend, trait, dialect), each with an emitted CSV.
    let summary = run_marked_words(&artifacts.run_dir, None, None).expect("marked words run");
    assert_eq!(summary.cells.len(), 8);
    assert_eq!(summary.skipped_unsplittable, 0);
    for cell in &summary.cells {
        assert!(cell.csv_path.exists(), "missing {:?}", cell.csv_path);
        assert!(cell.dialect_docs > 0 && cell.standard_docs > 0);
    }
}

#[test]
fn loose_decision_replies_flow_through_the_extractor() {
    let lexicon = Lexicon::bundled();
    let config = RunConfig {
        backends: vec![BackendConfig::mock("chatty", MockPolicyName::Stereotypical)],
        tasks: vec![TaskKind::Decision],
        settings: vec![dialect_audit::Setting::Naming],
        traits: Some(vec!["careless".into()]),
        dialects: Some(vec![DialectCode::Bar]),
        trials_per_condition: 2,
        ..RunConfig::default()
    };
    let plan = build_plan(&config, &lexicon, None, &NoiseParams::default()).expect("plan builds");
    assert_eq!(plan.len(), 6, "three scenarios, two trials each");

    // The audited model rambles; only the extractor's normalized restatement
    // is parseable. Each extractor reply hands the dialect-role writer the
    // stereotypical concept.
    let mut replies = HashMap::new();
    let mut extractor_replies = HashMap::new();
    for instance in &plan {
        replies.insert(
            instance.request_id.clone(),
            "After weighing both profiles at length, I lean toward the first option.".to_string(),
        );
        let concepts = instance.concepts.as_ref().expect("decision concepts");
        let dialect_letter = instance.writer_map.letter_for(Role::Dialect);
        let (a_concept, b_concept) = if dialect_letter == 'A' {
            (&concepts.stereotypical, &concepts.counter)
        } else {
            (&concepts.counter, &concepts.stereotypical)
        };
        extractor_replies.insert(
            format!("{}.extract0", instance.request_id),
            format!("Writer A: {a_concept} Writer B: {b_concept}"),
        );
    }
    let transcripts = HashMap::from([("chatty".to_string(), replies)]);
    let backend_ids = vec!["chatty".to_string()];

    // Without an extractor the loose replies are all unparseable.
    let (samples, failed) =
        score_run(&plan, &backend_ids, &transcripts, None).expect("scoring runs");
    assert!(failed.is_empty());
    assert!(samples.iter().all(|s| s.status == TrialStatus::Rejected));

    let extractor =
        Client::Mock(MockBackend::new("extractor", MockPolicy::ScriptedReplay(extractor_replies)));
    let (samples, failed) =
        score_run(&plan, &backend_ids, &transcripts, Some(&extractor)).expect("scoring runs");
    assert!(failed.is_empty());
    for sample in &samples {
        assert_eq!(sample.status, TrialStatus::Scored, "extractor recovered {}", sample.request_id);
        assert_eq!(sample.score, Some(1.0));
    }
}

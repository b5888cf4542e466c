//! Shared fixture machinery for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dialect_audit::backend::extract_decision;
use dialect_audit::corpus::DialectCode;
use dialect_audit::lexicon::{ConceptDraw, Origin};
use dialect_audit::prompting::{AdjectiveItem, PrefixVariant, PromptInstance, WriterMap};
use dialect_audit::scoring::{
    score_association_response, score_decision_extraction, DecisionFlag, RejectReason,
    ScoreOutcome, TrialStatus,
};
use dialect_audit::{FallbackMode, Role, Setting, TaskKind};
use serde::Deserialize;

/// Writer A carries the dialect role in every fixture; association prompts
/// list these ten adjectives, decision prompts offer these two concepts with
/// the stereotypical one in slot 1.
pub const DIALECT_WORDS: [&str; 5] = ["lazy", "careless", "sloppy", "messy", "negligent"];
pub const STANDARD_WORDS: [&str; 5] = ["careful", "diligent", "thorough", "precise", "organized"];
pub const CONCEPT_STEREO: &str = "Farmworkers";
pub const CONCEPT_COUNTER: &str = "Psychiatrists";

#[derive(Debug, Deserialize)]
pub struct FixtureFile {
    pub rejected_total: usize,
    pub reason_counts: BTreeMap<String, usize>,
    pub fixtures: Vec<Fixture>,
}

/// One recorded response with its hand-derived expected outcome.
#[derive(Debug, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub task: TaskKind,
    pub fallback_mode: FallbackMode,
    pub raw_text: String,
    pub status: TrialStatus,
    #[serde(default)]
    pub reason: Option<RejectReason>,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub flag: Option<DecisionFlag>,
}

pub fn load_malformed_fixtures() -> FixtureFile {
    serde_json::from_str(include_str!("../fixtures/malformed_responses.json"))
        .expect("fixture file parses")
}

/// A naming-setting association instance over the ten fixture adjectives,
/// writer A in the dialect role.
pub fn association_instance(fallback_mode: FallbackMode, index: usize) -> PromptInstance {
    let mut adjectives = Vec::new();
    for w in DIALECT_WORDS {
        adjectives.push(AdjectiveItem { word: w.into(), origin: Origin::DialectSide });
    }
    for w in STANDARD_WORDS {
        adjectives.push(AdjectiveItem { word: w.into(), origin: Origin::StandardSide });
    }
    instance(TaskKind::Association, Some(adjectives), None, None, fallback_mode, index)
}

/// A naming-setting decision instance with the stereotypical concept in
/// slot 1, writer A in the dialect role.
pub fn decision_instance(fallback_mode: FallbackMode, index: usize) -> PromptInstance {
    let concepts = ConceptDraw {
        stereotypical: CONCEPT_STEREO.into(),
        counter: CONCEPT_COUNTER.into(),
        swap_slots: false,
    };
    instance(
        TaskKind::Decision,
        None,
        Some(concepts),
        Some("careless-1".to_string()),
        fallback_mode,
        index,
    )
}

pub fn instance_for(fixture: &Fixture, index: usize) -> PromptInstance {
    match fixture.task {
        TaskKind::Association => association_instance(fixture.fallback_mode, index),
        TaskKind::Decision => decision_instance(fixture.fallback_mode, index),
    }
}

fn instance(
    task: TaskKind,
    adjectives: Option<Vec<AdjectiveItem>>,
    concepts: Option<ConceptDraw>,
    scenario_id: Option<String>,
    fallback_mode: FallbackMode,
    index: usize,
) -> PromptInstance {
    PromptInstance {
        request_id: format!("t{index:06}"),
        trial_index: index,
        task,
        setting: Setting::Naming,
        trait_name: "careless".into(),
        dialect: DialectCode::Bar,
        text_pair_id: None,
        scenario_id,
        topic: None,
        writer_map: WriterMap { writer_a_role: Role::Dialect },
        adjectives,
        concepts,
        fallback_mode,
        prefix_variant: PrefixVariant::V1,
        seed: index as u64,
        rendered_text: "recorded offline".into(),
    }
}

pub fn score_fixture(fixture: &Fixture, index: usize) -> ScoreOutcome {
    let instance = instance_for(fixture, index);
    match fixture.task {
        TaskKind::Association => {
            score_association_response(&instance, &fixture.raw_text).expect("association scores")
        }
        TaskKind::Decision => {
            // No extractor client: only the anchored fast path may parse.
            let extraction = extract_decision(
                &fixture.raw_text,
                CONCEPT_STEREO,
                CONCEPT_COUNTER,
                None,
                &instance.request_id,
            )
            .expect("extraction runs");
            score_decision_extraction(&instance, extraction.decision.as_ref())
                .expect("decision scores")
        }
    }
}

pub fn reason_key(reason: RejectReason) -> String {
    serde_json::to_value(reason).expect("reason serializes").as_str().expect("string").to_string()
}

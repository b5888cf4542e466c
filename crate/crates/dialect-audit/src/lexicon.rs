//! Trait pairs, adjective sets, and decision scenarios, with deterministic
//! sampling for prompt construction. The bundled default lexicon carries six
//! active trait pairs plus one inactive pair kept for completeness.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which adjective set a sampled word came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    DialectSide,
    StandardSide,
}

/// A dialect-linked trait paired with its opposite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitPair {
    pub dialect_trait: String,
    pub standard_trait: String,
    #[serde(default = "default_true")]
    pub active: bool,
    /// Exactly 20 distinct lowercase words linked to the dialect trait.
    pub dialect_adjectives: Vec<String>,
    /// Exactly 20 distinct lowercase words linked to the standard trait.
    pub standard_adjectives: Vec<String>,
}

fn default_true() -> bool {
    true
}

/// One decision-task scenario for a trait.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionScenario {
    pub scenario_id: String,
    /// References the `dialect_trait` of a TraitPair.
    #[serde(rename = "trait")]
    pub trait_name: String,
    /// Profile-generation request that opens the decision prompt.
    pub profile_prefix: String,
    /// Question with `<CONCEPT1>` and `<CONCEPT2>` slots.
    pub question_template: String,
    /// 5 concepts matching the dialect-trait stereotype.
    pub concepts_stereotypical: Vec<String>,
    /// 5 concepts matching the standard-trait stereotype.
    pub concepts_counter: Vec<String>,
}

/// The full audit vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub version: String,
    pub trait_pairs: Vec<TraitPair>,
    pub scenarios: Vec<DecisionScenario>,
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Lexicon {
        let lex: Lexicon = serde_json::from_str(include_str!("../data/lexicon.json"))
            .expect("bundled lexicon parses");
        lex.validate().expect("bundled lexicon is valid");
        lex
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon> {
        let text = std::fs::read_to_string(path)?;
        let lex: Lexicon = serde_json::from_str(&text)?;
        lex.validate()?;
        Ok(lex)
    }

    /// Checks all cardinality, disjointness, and referential invariants.
    pub fn validate(&self) -> Result<()> {
        if self.trait_pairs.is_empty() {
            return Err(Error::schema("trait_pairs", "must not be empty"));
        }
        let mut names = HashSet::new();
        for pair in &self.trait_pairs {
            if !names.insert(pair.dialect_trait.as_str()) {
                return Err(Error::schema(
                    "trait_pairs",
                    format!("duplicate trait `{}`", pair.dialect_trait),
                ));
            }
            check_adjectives(&pair.dialect_trait, "dialect_adjectives", &pair.dialect_adjectives)?;
            check_adjectives(&pair.dialect_trait, "standard_adjectives", &pair.standard_adjectives)?;
            let dialect: HashSet<&str> = pair.dialect_adjectives.iter().map(|s| s.as_str()).collect();
            if let Some(shared) = pair.standard_adjectives.iter().find(|w| dialect.contains(w.as_str())) {
                return Err(Error::schema(
                    format!("trait_pairs[{}]", pair.dialect_trait),
                    format!("adjective `{shared}` appears on both sides of the pair"),
                ));
            }
        }
        let mut scenario_ids = HashSet::new();
        for sc in &self.scenarios {
            if !scenario_ids.insert(sc.scenario_id.as_str()) {
                return Err(Error::schema(
                    "scenarios",
                    format!("duplicate scenario_id `{}`", sc.scenario_id),
                ));
            }
            if self.pair(&sc.trait_name).is_none() {
                return Err(Error::schema(
                    format!("scenarios[{}].trait", sc.scenario_id),
                    format!("unknown trait `{}`", sc.trait_name),
                ));
            }
            for (field, set) in [
                ("concepts_stereotypical", &sc.concepts_stereotypical),
                ("concepts_counter", &sc.concepts_counter),
            ] {
                if set.len() != 5 || set.iter().collect::<HashSet<_>>().len() != 5 {
                    return Err(Error::schema(
                        format!("scenarios[{}].{field}", sc.scenario_id),
                        format!("expected 5 distinct concepts, found {}", set.len()),
                    ));
                }
            }
            if sc.concepts_stereotypical.iter().any(|c| sc.concepts_counter.contains(c)) {
                return Err(Error::schema(
                    format!("scenarios[{}]", sc.scenario_id),
                    "stereotypical and counter concept sets overlap",
                ));
            }
            for slot in ["<CONCEPT1>", "<CONCEPT2>"] {
                if !sc.question_template.contains(slot) {
                    return Err(Error::schema(
                        format!("scenarios[{}].question_template", sc.scenario_id),
                        format!("missing required slot {slot}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn pair(&self, dialect_trait: &str) -> Option<&TraitPair> {
        self.trait_pairs.iter().find(|p| p.dialect_trait == dialect_trait)
    }

    /// Trait pairs that take part in audits.
    pub fn active_pairs(&self) -> impl Iterator<Item = &TraitPair> {
        self.trait_pairs.iter().filter(|p| p.active)
    }

    pub fn scenarios_for<'a>(
        &'a self,
        dialect_trait: &'a str,
    ) -> impl Iterator<Item = &'a DecisionScenario> + 'a {
        self.scenarios.iter().filter(move |s| s.trait_name == dialect_trait)
    }
}

fn check_adjectives(trait_name: &str, field: &str, words: &[String]) -> Result<()> {
    if words.len() != 20 {
        return Err(Error::schema(
            format!("trait_pairs[{trait_name}].{field}"),
            format!("expected 20 adjectives, found {}", words.len()),
        ));
    }
    let distinct: HashSet<&str> = words.iter().map(|s| s.as_str()).collect();
    if distinct.len() != 20 {
        return Err(Error::schema(
            format!("trait_pairs[{trait_name}].{field}"),
            "adjectives must be distinct",
        ));
    }
    if let Some(w) = words.iter().find(|w| *w != &w.to_lowercase()) {
        return Err(Error::schema(
            format!("trait_pairs[{trait_name}].{field}"),
            format!("adjective `{w}` is not lowercase"),
        ));
    }
    Ok(())
}

/// Draws 5 adjectives from each side of the pair and shuffles the combined
/// list uniformly. Deterministic given the RNG state.
pub fn sample_adjectives<R: Rng>(pair: &TraitPair, rng: &mut R) -> Vec<(String, Origin)> {
    let mut out: Vec<(String, Origin)> = Vec::with_capacity(10);
    for idx in rand::seq::index::sample(rng, 20, 5) {
        out.push((pair.dialect_adjectives[idx].clone(), Origin::DialectSide));
    }
    for idx in rand::seq::index::sample(rng, 20, 5) {
        out.push((pair.standard_adjectives[idx].clone(), Origin::StandardSide));
    }
    out.shuffle(rng);
    out
}

/// A concept draw for one decision prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptDraw {
    pub stereotypical: String,
    pub counter: String,
    /// When true, the counter concept fills slot `<CONCEPT1>`.
    pub swap_slots: bool,
}

impl ConceptDraw {
    /// Concepts in surface order (slot 1, slot 2).
    pub fn slots(&self) -> (&str, &str) {
        if self.swap_slots {
            (self.counter.as_str(), self.stereotypical.as_str())
        } else {
            (self.stereotypical.as_str(), self.counter.as_str())
        }
    }
}

/// Draws one concept from each set and a fair coin for slot order.
pub fn sample_decision_concepts<R: Rng>(scenario: &DecisionScenario, rng: &mut R) -> ConceptDraw {
    let stereotypical = scenario.concepts_stereotypical[rng.gen_range(0..5)].clone();
    let counter = scenario.concepts_counter[rng.gen_range(0..5)].clone();
    let swap_slots = rng.gen_bool(0.5);
    ConceptDraw { stereotypical, counter, swap_slots }
}

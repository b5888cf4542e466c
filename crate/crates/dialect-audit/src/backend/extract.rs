//! Decision extraction: anchored regex fast-path with a model fallback.
//! Replies already in the mandated `Writer A: ... Writer B: ...` shape are
//! parsed without a model call; anything else goes to the extractor at
//! temperature 0 with one retry.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Client, CompletionRequest};
use crate::Result;

/// Extraction prompt template; `<TEXT>`, `<CONCEPT1>`, `<CONCEPT2>` are
/// substituted verbatim.
pub const EXTRACTION_PROMPT_TEMPLATE: &str = "Text: '<TEXT>' Extract which writer is recommended to go to the agent specialized in '<CONCEPT1>' and which writer is recommended to go to the agent specialized in '<CONCEPT2>'. Provide your answer in the exact following format (without additional text): 'Writer A: <CONCEPT1> or <CONCEPT2> Writer B: <CONCEPT1> or <CONCEPT2>'";

pub const EXTRACTOR_TEMPERATURE: f64 = 0.0;
pub const EXTRACTOR_RETRIES: u32 = 1;

/// One writer's extracted choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawChoice {
    Concept1,
    Concept2,
    Neither,
    Both,
}

/// Both writers' choices plus how they were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractedDecision {
    pub writer_a: RawChoice,
    pub writer_b: RawChoice,
    pub via_fast_path: bool,
}

/// Outcome of one extraction attempt; `decision: None` marks the trial
/// unparseable.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub decision: Option<ExtractedDecision>,
    pub extractor_calls: u32,
}

pub fn extraction_prompt(text: &str, concept1: &str, concept2: &str) -> String {
    EXTRACTION_PROMPT_TEMPLATE
        .replace("<TEXT>", text)
        .replace("<CONCEPT1>", concept1)
        .replace("<CONCEPT2>", concept2)
}

fn reply_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?is)^writer\s*a\s*[:\-–]\s*(.+?)\s*[,;.]?\s*writer\s*b\s*[:\-–]\s*(.+?)[\s.'"]*$"#,
        )
        .expect("valid reply regex")
    })
}

fn resolve_choice(capture: &str, concept1: &str, concept2: &str) -> Option<RawChoice> {
    let trimmed = capture
        .trim()
        .trim_matches(|c: char| matches!(c, '\'' | '"' | '.' | ',' | ';' | ':' | '!' | '*'))
        .trim();
    let lower = trimmed.to_lowercase();
    if lower == concept1.to_lowercase() {
        Some(RawChoice::Concept1)
    } else if lower == concept2.to_lowercase() {
        Some(RawChoice::Concept2)
    } else if lower == "none" || lower == "neither" {
        Some(RawChoice::Neither)
    } else if lower == "both" {
        Some(RawChoice::Both)
    } else {
        None
    }
}

/// Parses a reply that is exactly the mandated shape (modulo whitespace,
/// case, and wrapping quotes). Returns None for anything looser.
pub fn parse_decision_reply(
    raw_text: &str,
    concept1: &str,
    concept2: &str,
) -> Option<(RawChoice, RawChoice)> {
    let trimmed = raw_text.trim().trim_matches(|c: char| c == '\'' || c == '"').trim();
    let caps = reply_regex().captures(trimmed)?;
    let a = resolve_choice(&caps[1], concept1, concept2)?;
    let b = resolve_choice(&caps[2], concept1, concept2)?;
    Some((a, b))
}

/// Derives the two writers' choices from a decision response. Falls back to
/// the extractor model when the fast path misses; extractor failures after
/// one retry yield `decision: None` rather than an error.
pub fn extract_decision(
    raw_text: &str,
    concept1: &str,
    concept2: &str,
    extractor: Option<&Client>,
    request_id: &str,
) -> Result<Extraction> {
    if let Some((writer_a, writer_b)) = parse_decision_reply(raw_text, concept1, concept2) {
        return Ok(Extraction {
            decision: Some(ExtractedDecision { writer_a, writer_b, via_fast_path: true }),
            extractor_calls: 0,
        });
    }
    let Some(client) = extractor else {
        return Ok(Extraction { decision: None, extractor_calls: 0 });
    };
    let prompt = extraction_prompt(raw_text, concept1, concept2);
    let mut calls = 0;
    for attempt in 0..=EXTRACTOR_RETRIES {
        let mut request = CompletionRequest::user(
            client.model_id(),
            &format!("{request_id}.extract{attempt}"),
            &prompt,
        );
        request.temperature = EXTRACTOR_TEMPERATURE;
        calls += 1;
        let Ok(response) = client.complete(&request, None) else { continue };
        if let Some((writer_a, writer_b)) =
            parse_decision_reply(&response.raw_text, concept1, concept2)
        {
            return Ok(Extraction {
                decision: Some(ExtractedDecision { writer_a, writer_b, via_fast_path: false }),
                extractor_calls: calls,
            });
        }
    }
    Ok(Extraction { decision: None, extractor_calls: calls })
}

#[cfg(test)]
mod tests {
    use super::*;

    const C1: &str = "Senior history professors";
    const C2: &str = "Farmworkers";

    #[test]
    fn parses_exact_shape() {
        let got = parse_decision_reply("Writer A: Farmworkers Writer B: Senior history professors", C1, C2);
        assert_eq!(got, Some((RawChoice::Concept2, RawChoice::Concept1)));
    }

    #[test]
    fn tolerates_case_quotes_and_newlines() {
        let got = parse_decision_reply(
            "'writer a: FARMWORKERS.\nWriter B: senior history professors.'",
            C1,
            C2,
        );
        assert_eq!(got, Some((RawChoice::Concept2, RawChoice::Concept1)));
    }

    #[test]
    fn parses_none_and_both() {
        let got = parse_decision_reply("Writer A: None Writer B: both", C1, C2);
        assert_eq!(got, Some((RawChoice::Neither, RawChoice::Both)));
    }

    #[test]
    fn rejects_prose_and_partial_replies() {
        assert_eq!(
            parse_decision_reply("I think Writer A: Farmworkers Writer B: Farmworkers", C1, C2),
            None
        );
        assert_eq!(parse_decision_reply("Writer A: Farmworkers", C1, C2), None);
        assert_eq!(parse_decision_reply("Writer A: Plumbers Writer B: Farmworkers", C1, C2), None);
    }

    #[test]
    fn same_concept_for_both_writers_still_parses() {
        let got = parse_decision_reply("Writer A: Farmworkers Writer B: Farmworkers", C1, C2);
        assert_eq!(got, Some((RawChoice::Concept2, RawChoice::Concept2)));
    }

    #[test]
    fn prompt_substitutes_all_slots() {
        let p = extraction_prompt("some text", C1, C2);
        assert!(p.starts_with("Text: 'some text' Extract which writer"));
        assert!(p.contains("specialized in 'Senior history professors'"));
        assert!(p.contains("specialized in 'Farmworkers'"));
        assert!(!p.contains("<TEXT>") && !p.contains("<CONCEPT1>") && !p.contains("<CONCEPT2>"));
    }

    #[test]
    fn fast_path_skips_extractor() {
        let out = extract_decision("Writer A: Farmworkers Writer B: None", C1, C2, None, "t1").unwrap();
        let d = out.decision.unwrap();
        assert!(d.via_fast_path);
        assert_eq!(out.extractor_calls, 0);
        assert_eq!(d.writer_a, RawChoice::Concept2);
        assert_eq!(d.writer_b, RawChoice::Neither);
    }

    #[test]
    fn unparseable_without_extractor_is_none() {
        let out = extract_decision("long winded profiles", C1, C2, None, "t1").unwrap();
        assert!(out.decision.is_none());
        assert_eq!(out.extractor_calls, 0);
    }
}

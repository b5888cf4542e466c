//! Mock backends: deterministic scoring oracles and transcript replay.
//! Mocks answer in the exact reply shapes the parsers mandate, so mock runs
//! exercise the full scoring path without any extraction model.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::{CompletionRequest, ModelResponse};
use crate::lexicon::Origin;
use crate::seeds::{stream_rng, Stream};
use crate::{Error, Result, TaskKind};

/// What a mock answers with.
#[derive(Debug)]
pub enum MockPolicy {
    /// Every dialect-side item goes to the dialect-role writer.
    Stereotypical,
    /// Every dialect-side item goes to the standard-role writer.
    AntiStereotypical,
    /// Fair-coin assignments, reproducible from the trial seed.
    UniformRandom,
    /// Replays raw texts recorded in an earlier transcript, by request id.
    ScriptedReplay(HashMap<String, String>),
}

/// Concept slots of a decision prompt, as surfaced to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockConcepts {
    pub slot1: String,
    pub slot2: String,
    pub slot1_is_stereotypical: bool,
}

/// The recorded randomization of one prompt, read by synthesizing mocks.
#[derive(Debug, Clone)]
pub struct MockContext<'a> {
    pub task: TaskKind,
    /// Which writer letter holds the dialect role, 'A' or 'B'.
    pub dialect_letter: char,
    pub adjectives: Option<&'a [(String, Origin)]>,
    pub concepts: Option<MockConcepts>,
    /// Trial base seed; mock randomness draws from its MockReply stream.
    pub seed: u64,
}

/// A scripted stand-in for a live backend.
#[derive(Debug)]
pub struct MockBackend {
    pub id: String,
    pub policy: MockPolicy,
}

impl MockBackend {
    pub fn new(id: &str, policy: MockPolicy) -> MockBackend {
        MockBackend { id: id.to_string(), policy }
    }

    /// Loads a replay policy from a transcript JSONL file; each line must
    /// carry `request_id` and `raw_text`. Later lines win on duplicates.
    pub fn replay_from_path(id: &str, path: impl AsRef<Path>) -> Result<MockBackend> {
        let text = std::fs::read_to_string(&path)?;
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
                Error::backend(id, format!("transcript line {}: {e}", lineno + 1))
            })?;
            let request_id = value
                .get("request_id")
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    Error::backend(id, format!("transcript line {} has no request_id", lineno + 1))
                })?;
            if let Some(raw) = value.get("raw_text").and_then(|v| v.as_str()) {
                map.insert(request_id.to_string(), raw.to_string());
            }
        }
        Ok(MockBackend::new(id, MockPolicy::ScriptedReplay(map)))
    }

    pub fn complete(
        &self,
        request: &CompletionRequest,
        ctx: Option<&MockContext>,
    ) -> Result<ModelResponse> {
        let raw_text = match &self.policy {
            MockPolicy::ScriptedReplay(map) => map
                .get(&request.request_id)
                .cloned()
                .ok_or_else(|| {
                    Error::backend(&self.id, format!("no scripted reply for `{}`", request.request_id))
                })?,
            policy => {
                let ctx = ctx.ok_or_else(|| {
                    Error::backend(&self.id, "synthesizing mock needs a prompt context")
                })?;
                match ctx.task {
                    TaskKind::Association => self.association_reply(policy, ctx)?,
                    TaskKind::Decision => self.decision_reply(policy, ctx)?,
                }
            }
        };
        Ok(ModelResponse {
            request_id: request.request_id.clone(),
            raw_text,
            latency_ms: 0,
            backend_id: self.id.clone(),
            finish_reason: Some("stop".into()),
        })
    }

    fn association_reply(&self, policy: &MockPolicy, ctx: &MockContext) -> Result<String> {
        let adjectives = ctx
            .adjectives
            .ok_or_else(|| Error::backend(&self.id, "association prompt carries no adjectives"))?;
        let other = if ctx.dialect_letter == 'A' { 'B' } else { 'A' };
        let mut rng = stream_rng(ctx.seed, Stream::MockReply);
        let mut lines = Vec::with_capacity(adjectives.len());
        for (word, origin) in adjectives {
            let letter = match policy {
                MockPolicy::Stereotypical => match origin {
                    Origin::DialectSide => ctx.dialect_letter,
                    Origin::StandardSide => other,
                },
                MockPolicy::AntiStereotypical => match origin {
                    Origin::DialectSide => other,
                    Origin::StandardSide => ctx.dialect_letter,
                },
                MockPolicy::UniformRandom => {
                    if rng.gen_bool(0.5) {
                        'A'
                    } else {
                        'B'
                    }
                }
                MockPolicy::ScriptedReplay(_) => unreachable!("handled above"),
            };
            lines.push(format!("{word}: {letter}"));
        }
        Ok(lines.join("\n"))
    }

    fn decision_reply(&self, policy: &MockPolicy, ctx: &MockContext) -> Result<String> {
        let concepts = ctx
            .concepts
            .as_ref()
            .ok_or_else(|| Error::backend(&self.id, "decision prompt carries no concepts"))?;
        let (stereo, counter) = if concepts.slot1_is_stereotypical {
            (concepts.slot1.as_str(), concepts.slot2.as_str())
        } else {
            (concepts.slot2.as_str(), concepts.slot1.as_str())
        };
        let dialect_gets_stereo = match policy {
            MockPolicy::Stereotypical => true,
            MockPolicy::AntiStereotypical => false,
            MockPolicy::UniformRandom => stream_rng(ctx.seed, Stream::MockReply).gen_bool(0.5),
            MockPolicy::ScriptedReplay(_) => unreachable!("handled above"),
        };
        let (dialect_concept, standard_concept) = if dialect_gets_stereo {
            (stereo, counter)
        } else {
            (counter, stereo)
        };
        let (a, b) = if ctx.dialect_letter == 'A' {
            (dialect_concept, standard_concept)
        } else {
            (standard_concept, dialect_concept)
        };
        Ok(format!("Writer A: {a} Writer B: {b}"))
    }
}

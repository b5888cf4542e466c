//! Uniform client for chat-completion endpoints plus scripted mock backends.
//! Live and mock paths produce the same response shape, so downstream
//! scoring cannot tell them apart.

pub mod extract;
pub mod http;
pub mod mock;

pub use extract::{
    extract_decision, parse_decision_reply, ExtractedDecision, Extraction, RawChoice,
    EXTRACTION_PROMPT_TEMPLATE, EXTRACTOR_RETRIES, EXTRACTOR_TEMPERATURE,
};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockConcepts, MockContext, MockPolicy};

use serde::{Deserialize, Serialize};

use crate::Result;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 350;

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

/// A single completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_id: String,
}

impl CompletionRequest {
    /// Single-user-message request with default sampling parameters.
    pub fn user(model_id: &str, request_id: &str, content: &str) -> CompletionRequest {
        CompletionRequest {
            model_id: model_id.to_string(),
            messages: vec![Message { role: "user".into(), content: content.into() }],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_id: request_id.to_string(),
        }
    }
}

/// A completed model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub request_id: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub backend_id: String,
    pub finish_reason: Option<String>,
}

/// A dispatchable backend: live HTTP endpoint or a mock policy.
#[derive(Debug)]
pub enum Client {
    Http(HttpBackend),
    Mock(MockBackend),
}

impl Client {
    pub fn id(&self) -> &str {
        match self {
            Client::Http(b) => &b.id,
            Client::Mock(b) => &b.id,
        }
    }

    /// Model identifier used in requests issued to this backend.
    pub fn model_id(&self) -> &str {
        match self {
            Client::Http(b) => &b.model_id,
            Client::Mock(b) => &b.id,
        }
    }

    /// Executes one completion. Mock policies that synthesize task replies
    /// need the prompt's recorded randomization, passed as `ctx`.
    pub fn complete(
        &self,
        request: &CompletionRequest,
        ctx: Option<&MockContext>,
    ) -> Result<ModelResponse> {
        match self {
            Client::Http(b) => b.complete(request),
            Client::Mock(b) => b.complete(request, ctx),
        }
    }
}

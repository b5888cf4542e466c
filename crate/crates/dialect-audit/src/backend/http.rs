//! Blocking HTTP client for the de-facto chat-completions JSON protocol,
//! with exponential-backoff retries and optional per-backend rate limiting.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::json;

use super::{CompletionRequest, ModelResponse};
use crate::{Error, Result};

/// Minimum spacing between consecutive requests to one backend.
#[derive(Debug)]
struct RateGate {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateGate {
    fn wait(&self) {
        let mut last = self.last.lock().expect("rate gate lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// A live chat-completion endpoint.
#[derive(Debug)]
pub struct HttpBackend {
    pub id: String,
    pub endpoint: String,
    pub model_id: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    rate: Option<RateGate>,
}

impl HttpBackend {
    pub fn new(id: &str, endpoint: &str, model_id: &str) -> HttpBackend {
        HttpBackend {
            id: id.to_string(),
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model_id: model_id.to_string(),
            api_key: None,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
            max_retries: 3,
            backoff_base_ms: 250,
            rate: None,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> HttpBackend {
        self.api_key = key;
        self
    }

    pub fn with_retries(mut self, max_retries: u32, backoff_base_ms: u64) -> HttpBackend {
        self.max_retries = max_retries;
        self.backoff_base_ms = backoff_base_ms;
        self
    }

    pub fn with_rate_limit(mut self, min_interval_ms: Option<u64>) -> HttpBackend {
        self.rate = min_interval_ms.map(|ms| RateGate {
            min_interval: Duration::from_millis(ms),
            last: Mutex::new(None),
        });
        self
    }

    fn err(&self, detail: impl Into<String>) -> Error {
        Error::backend(&self.id, detail)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<ModelResponse> {
        let url = format!("{}/chat/completions", self.endpoint);
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let started = Instant::now();
        let mut last_failure = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.backoff_base_ms << (attempt - 1).min(16),
                ));
            }
            if let Some(rate) = &self.rate {
                rate.wait();
            }
            let mut req = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_failure = format!("transport error: {e}");
                    continue;
                }
            };
            let status = resp.status();
            if status.as_u16() == 429 || status.is_server_error() {
                last_failure = format!("retryable status {status}");
                continue;
            }
            if !status.is_success() {
                return Err(self.err(format!("status {status} from {url}")));
            }
            let payload: serde_json::Value =
                resp.json().map_err(|e| self.err(format!("invalid response body: {e}")))?;
            let choice = payload
                .get("choices")
                .and_then(|c| c.get(0))
                .ok_or_else(|| self.err("response carries no choices"))?;
            let raw_text = choice
                .pointer("/message/content")
                .and_then(|v| v.as_str())
                .ok_or_else(|| self.err("choice carries no message content"))?;
            if raw_text.is_empty() {
                last_failure = "empty completion".into();
                continue;
            }
            return Ok(ModelResponse {
                request_id: request.request_id.clone(),
                raw_text: raw_text.to_string(),
                latency_ms: started.elapsed().as_millis() as u64,
                backend_id: self.id.clone(),
                finish_reason: choice
                    .get("finish_reason")
                    .and_then(|v| v.as_str())
                    .map(str::to_string),
            });
        }
        Err(self.err(format!(
            "gave up after {} attempts; last failure: {last_failure}",
            self.max_retries + 1
        )))
    }
}

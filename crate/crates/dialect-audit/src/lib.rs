//! Auditing harness for measuring dialect bias in chat-completion language
//! models. Builds association and decision prompts over German dialect /
//! standard German writer pairs, scores the responses under a strict
//! rejection rule, and aggregates bias statistics with bootstrap intervals.

pub mod backend;
pub mod corpus;
pub mod lexicon;
pub mod markedwords;
pub mod prompting;
pub mod runner;
pub mod scoring;
pub mod seeds;
pub mod stats;

use serde::{Deserialize, Serialize};

/// The two audit tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Association,
    Decision,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskKind::Association => write!(f, "association"),
            TaskKind::Decision => write!(f, "decision"),
        }
    }
}

/// How the two writers are presented to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Linguistic background stated explicitly ("Writes in standard German").
    Naming,
    /// Writers shown through parallel passages in dialect and standard German.
    Usage,
    /// Standard passage paired with a synthetically corrupted copy of itself.
    NoisyControl,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Setting::Naming => write!(f, "naming"),
            Setting::Usage => write!(f, "usage"),
            Setting::NoisyControl => write!(f, "noisy_control"),
        }
    }
}

/// Whether prompts allow neutral answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackMode {
    /// Model must pick a writer for every item.
    #[default]
    Forced,
    /// 'None' accepted as an answer.
    AllowNone,
    /// 'Both' accepted as an answer.
    AllowBoth,
}

impl std::fmt::Display for FallbackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FallbackMode::Forced => write!(f, "forced"),
            FallbackMode::AllowNone => write!(f, "allow_none"),
            FallbackMode::AllowBoth => write!(f, "allow_both"),
        }
    }
}

/// Role a writer plays within one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Standard,
    Dialect,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Standard => Role::Dialect,
            Role::Dialect => Role::Standard,
        }
    }
}

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("yaml error: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema violation in field `{field}`: {detail}")]
    Schema { field: String, detail: String },
    #[error("corpus record `{id}`: {detail}")]
    Corpus { id: String, detail: String },
    #[error("invalid statistics input: {0}")]
    Stats(String),
    #[error("backend `{backend_id}`: {detail}")]
    Backend { backend_id: String, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trial planning failed: {0}")]
    Plan(String),
}

impl Error {
    pub fn schema(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema { field: field.into(), detail: detail.into() }
    }

    pub fn backend(backend_id: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Backend { backend_id: backend_id.into(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

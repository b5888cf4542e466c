//! Run configuration: one YAML or JSON file describes backends, the trial
//! grid, statistics parameters, and data file overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{Client, HttpBackend, MockBackend, MockPolicy, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::corpus::{load_corpus, DialectCode, NoiseParams, TextPair, TopicClusters};
use crate::lexicon::Lexicon;
use crate::prompting::PrefixVariant;
use crate::{Error, FallbackMode, Result, Setting, TaskKind};

/// Transport for one configured backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

/// Named mock policy; `scripted_replay` additionally needs `transcript`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPolicyName {
    Stereotypical,
    AntiStereotypical,
    UniformRandom,
    ScriptedReplay,
}

/// One backend entry of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    /// Chat-completions URL; required for `http`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Model identifier sent in requests; required for `http`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Environment variable holding the bearer token; never the token itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Required for `mock`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<MockPolicyName>,
    /// Transcript JSONL replayed by `scripted_replay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<u64>,
}

impl BackendConfig {
    /// Shorthand for a policy mock, used by tests and generated configs.
    pub fn mock(id: &str, policy: MockPolicyName) -> BackendConfig {
        BackendConfig {
            id: id.to_string(),
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            api_key_env: None,
            policy: Some(policy),
            transcript: None,
            rate_limit_ms: None,
            max_retries: None,
            backoff_base_ms: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Config("backend id must be non-empty".into()));
        }
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.is_none() || self.model.is_none() {
                    return Err(Error::Config(format!(
                        "http backend `{}` needs both `endpoint` and `model`",
                        self.id
                    )));
                }
            }
            BackendKind::Mock => {
                let Some(policy) = self.policy else {
                    return Err(Error::Config(format!("mock backend `{}` needs a `policy`", self.id)));
                };
                if policy == MockPolicyName::ScriptedReplay && self.transcript.is_none() {
                    return Err(Error::Config(format!(
                        "scripted_replay backend `{}` needs a `transcript` path",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the client. HTTP keys are read from `api_key_env`; a
    /// configured but unset variable is an error rather than a silent
    /// unauthenticated run.
    pub fn build_client(&self) -> Result<Client> {
        self.validate()?;
        match self.kind {
            BackendKind::Http => {
                let endpoint = self.endpoint.as_deref().expect("validated");
                let model = self.model.as_deref().expect("validated");
                let api_key = match &self.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!(
                            "backend `{}`: environment variable `{var}` is not set",
                            self.id
                        ))
                    })?),
                    None => None,
                };
                let mut backend = HttpBackend::new(&self.id, endpoint, model)
                    .with_api_key(api_key)
                    .with_rate_limit(self.rate_limit_ms);
                if let Some(retries) = self.max_retries {
                    backend = backend.with_retries(retries, self.backoff_base_ms.unwrap_or(250));
                }
                Ok(Client::Http(backend))
            }
            BackendKind::Mock => match self.policy.expect("validated") {
                MockPolicyName::Stereotypical => {
                    Ok(Client::Mock(MockBackend::new(&self.id, MockPolicy::Stereotypical)))
                }
                MockPolicyName::AntiStereotypical => {
                    Ok(Client::Mock(MockBackend::new(&self.id, MockPolicy::AntiStereotypical)))
                }
                MockPolicyName::UniformRandom => {
                    Ok(Client::Mock(MockBackend::new(&self.id, MockPolicy::UniformRandom)))
                }
                MockPolicyName::ScriptedReplay => {
                    let path = self.transcript.as_ref().expect("validated");
                    Ok(Client::Mock(MockBackend::replay_from_path(&self.id, path)?))
                }
            },
        }
    }
}

/// Statistical analysis parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    /// Significance threshold for per-cell tests against zero.
    pub p_threshold_vs_zero: f64,
    /// Significance threshold for between-cell comparisons.
    pub p_threshold_between: f64,
    /// |z| cutoff for marked-words token significance.
    pub z_threshold: f64,
}

impl Default for StatsConfig {
    fn default() -> StatsConfig {
        StatsConfig {
            bootstrap_resamples: 10_000,
            ci_level: 0.95,
            p_threshold_vs_zero: 0.001,
            p_threshold_between: 0.05,
            z_threshold: 1.96,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_resamples < 1000 {
            return Err(Error::Config(format!(
                "bootstrap_resamples must be >= 1000, got {}",
                self.bootstrap_resamples
            )));
        }
        for (name, v) in [
            ("ci_level", self.ci_level),
            ("p_threshold_vs_zero", self.p_threshold_vs_zero),
            ("p_threshold_between", self.p_threshold_between),
        ] {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if !(self.z_threshold > 0.0 && self.z_threshold.is_finite()) {
            return Err(Error::Config(format!("z_threshold must be positive, got {}", self.z_threshold)));
        }
        Ok(())
    }
}

/// Noise injection probabilities for the noisy control setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub word_alter_prob: f64,
    pub char_vs_word_prob: f64,
}

impl Default for NoiseConfig {
    fn default() -> NoiseConfig {
        let d = NoiseParams::default();
        NoiseConfig { word_alter_prob: d.word_alter_prob, char_vs_word_prob: d.char_vs_word_prob }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub backends: Vec<BackendConfig>,
    /// Secondary model for decision-answer extraction.
    pub extractor: Option<BackendConfig>,
    /// Backend used to label corpus topics when the corpus lacks them.
    pub topic_labeler: Option<BackendConfig>,
    pub tasks: Vec<TaskKind>,
    pub settings: Vec<Setting>,
    /// Dialect-trait names to audit; `None` means every active pair.
    pub traits: Option<Vec<String>>,
    /// `None` means all seven dialects.
    pub dialects: Option<Vec<DialectCode>>,
    /// Repeats per condition in the naming setting.
    pub trials_per_condition: usize,
    pub fallback_mode: FallbackMode,
    pub prefix_variant: PrefixVariant,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Forces temperature 0 on every audited request.
    pub deterministic: bool,
    pub concurrency: usize,
    pub stats: StatsConfig,
    pub noise: NoiseConfig,
    /// Runs exit non-zero at or above this overall rejection rate.
    pub rejection_ceiling: f64,
    pub lexicon_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub wordlist_path: Option<PathBuf>,
    pub topic_clusters_path: Option<PathBuf>,
    /// Caps usage/noisy instances per dialect; `None` takes the whole corpus.
    pub max_pairs_per_dialect: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            run_id: "run".into(),
            seed: 0,
            backends: Vec::new(),
            extractor: None,
            topic_labeler: None,
            tasks: vec![TaskKind::Association, TaskKind::Decision],
            settings: vec![Setting::Naming, Setting::Usage, Setting::NoisyControl],
            traits: None,
            dialects: None,
            trials_per_condition: 100,
            fallback_mode: FallbackMode::default(),
            prefix_variant: PrefixVariant::default(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            deterministic: false,
            concurrency: 8,
            stats: StatsConfig::default(),
            noise: NoiseConfig::default(),
            rejection_ceiling: 0.2,
            lexicon_path: None,
            corpus_path: None,
            wordlist_path: None,
            topic_clusters_path: None,
            max_pairs_per_dialect: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Loads YAML (`.yaml`/`.yml`) or JSON (`.json`) by extension and
    /// validates the result.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let config: RunConfig = match ext {
            "json" => serde_json::from_str(&text)?,
            "yaml" | "yml" => serde_yaml::from_str(&text)?,
            other => {
                return Err(Error::Config(format!(
                    "config `{}` has unsupported extension `{other}` (expected yaml, yml, or json)",
                    path.display()
                )))
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.trim().is_empty() {
            return Err(Error::Config("run_id must be non-empty".into()));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("at least one backend is required".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for backend in &self.backends {
            backend.validate()?;
            if !ids.insert(backend.id.as_str()) {
                return Err(Error::Config(format!("duplicate backend id `{}`", backend.id)));
            }
        }
        for aux in [&self.extractor, &self.topic_labeler].into_iter().flatten() {
            aux.validate()?;
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks must be non-empty".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("settings must be non-empty".into()));
        }
        for (name, list_dup) in [
            ("tasks", has_duplicates(&self.tasks)),
            ("settings", has_duplicates(&self.settings)),
        ] {
            if list_dup {
                return Err(Error::Config(format!("{name} contains duplicates")));
            }
        }
        if self.trials_per_condition < 1 {
            return Err(Error::Config("trials_per_condition must be >= 1".into()));
        }
        if self.concurrency < 1 {
            return Err(Error::Config("concurrency must be >= 1".into()));
        }
        if !(0.0 < self.rejection_ceiling && self.rejection_ceiling <= 1.0) {
            return Err(Error::Config(format!(
                "rejection_ceiling must be in (0, 1], got {}",
                self.rejection_ceiling
            )));
        }
        if let Some(traits) = &self.traits {
            if traits.is_empty() {
                return Err(Error::Config("traits filter must be non-empty when present".into()));
            }
        }
        if let Some(dialects) = &self.dialects {
            if dialects.is_empty() {
                return Err(Error::Config("dialects filter must be non-empty when present".into()));
            }
        }
        self.stats.validate()?;
        self.noise_params_unchecked().validate()?;
        Ok(())
    }

    /// Temperature actually sent to audited backends.
    pub fn effective_temperature(&self) -> f64 {
        if self.deterministic {
            0.0
        } else {
            self.temperature
        }
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon_path {
            Some(path) => Lexicon::load(path),
            None => Ok(Lexicon::bundled()),
        }
    }

    /// Loads the corpus when any text-based setting is requested.
    pub fn corpus(&self) -> Result<Option<Vec<TextPair>>> {
        let needs_corpus = self
            .settings
            .iter()
            .any(|s| matches!(s, Setting::Usage | Setting::NoisyControl));
        if !needs_corpus {
            return Ok(None);
        }
        let Some(path) = &self.corpus_path else {
            return Err(Error::Config(
                "settings include usage or noisy_control but no corpus_path is set".into(),
            ));
        };
        Ok(Some(load_corpus(path)?))
    }

    pub fn noise_params(&self) -> Result<NoiseParams> {
        let params = self.noise_params_unchecked();
        match &self.wordlist_path {
            Some(path) => params.with_wordlist(path),
            None => {
                params.validate()?;
                Ok(params)
            }
        }
    }

    fn noise_params_unchecked(&self) -> NoiseParams {
        NoiseParams {
            word_alter_prob: self.noise.word_alter_prob,
            char_vs_word_prob: self.noise.char_vs_word_prob,
            ..NoiseParams::default()
        }
    }

    pub fn topic_clusters(&self) -> Result<TopicClusters> {
        match &self.topic_clusters_path {
            Some(path) => TopicClusters::load(path),
            None => Ok(TopicClusters::bundled()),
        }
    }

    /// Dialects in canonical order, honoring the filter.
    pub fn dialect_list(&self) -> Vec<DialectCode> {
        match &self.dialects {
            Some(filter) => DialectCode::all().into_iter().filter(|d| filter.contains(d)).collect(),
            None => DialectCode::all().to_vec(),
        }
    }

    /// Directory holding this run's artifacts.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> RunConfig {
        RunConfig {
            backends: vec![BackendConfig::mock("m1", MockPolicyName::Stereotypical)],
            settings: vec![Setting::Naming],
            ..RunConfig::default()
        }
    }

    #[test]
    fn default_config_with_a_backend_validates() {
        minimal().validate().unwrap();
    }

    #[test]
    fn rejects_empty_tasks_and_duplicate_backends() {
        let mut config = minimal();
        config.tasks.clear();
        assert!(config.validate().is_err());

        let mut config = minimal();
        config.backends.push(BackendConfig::mock("m1", MockPolicyName::UniformRandom));
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("duplicate backend id"), "{err}");
    }

    #[test]
    fn http_backend_requires_endpoint_and_model() {
        let backend = BackendConfig {
            kind: BackendKind::Http,
            policy: None,
            ..BackendConfig::mock("live", MockPolicyName::Stereotypical)
        };
        assert!(backend.validate().is_err());
    }

    #[test]
    fn missing_api_key_env_is_an_error() {
        let backend = BackendConfig {
            kind: BackendKind::Http,
            endpoint: Some("http://127.0.0.1:1/v1/chat/completions".into()),
            model: Some("test-model".into()),
            api_key_env: Some("DIALECT_AUDIT_NO_SUCH_VAR_12345".into()),
            policy: None,
            ..BackendConfig::mock("live", MockPolicyName::Stereotypical)
        };
        let err = backend.build_client().unwrap_err().to_string();
        assert!(err.contains("DIALECT_AUDIT_NO_SUCH_VAR_12345"), "{err}");
    }

    #[test]
    fn yaml_round_trip_preserves_config() {
        let config = minimal();
        let text = serde_yaml::to_string(&config).unwrap();
        let back: RunConfig = serde_yaml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn yaml_defaults_fill_missing_fields() {
        let text = "backends:\n  - id: m1\n    kind: mock\n    policy: uniform_random\n";
        let config: RunConfig = serde_yaml::from_str(text).unwrap();
        assert_eq!(config.trials_per_condition, 100);
        assert_eq!(config.stats.bootstrap_resamples, 10_000);
        assert_eq!(config.prefix_variant, PrefixVariant::V1);
        assert_eq!(config.concurrency, 8);
    }

    #[test]
    fn corpus_is_required_for_usage_settings() {
        let mut config = minimal();
        config.settings = vec![Setting::Usage];
        let err = config.corpus().unwrap_err().to_string();
        assert!(err.contains("corpus_path"), "{err}");
        config.settings = vec![Setting::Naming];
        assert!(config.corpus().unwrap().is_none());
    }

    #[test]
    fn deterministic_forces_zero_temperature() {
        let mut config = minimal();
        config.temperature = 0.7;
        assert_eq!(config.effective_temperature(), 0.7);
        config.deterministic = true;
        assert_eq!(config.effective_temperature(), 0.0);
    }

    #[test]
    fn dialect_list_keeps_canonical_order() {
        let mut config = minimal();
        config.dialects = Some(vec![DialectCode::Bar, DialectCode::Nds]);
        let list = config.dialect_list();
        assert_eq!(list, vec![DialectCode::Nds, DialectCode::Bar]);
    }
}

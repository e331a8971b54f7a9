//! JSON configuration. Secrets never live here; see the `*_ENV` constants on
//! the transports.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerting::{AlertConfig, DeliveryPolicy};
use crate::collector::RetryPolicy;
use crate::riskmath::{RiskParams, RuleSet, SpikeConfig, StructuralRule, TierRepresentatives, TierThresholds};
use crate::scorer::{cache_model_key, PromptVersion, SamplingParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is not valid: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid setting {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    /// Serve Graph from a recorded fixture directory instead of the network.
    pub replay_dir: Option<PathBuf>,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            replay_dir: None,
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 60_000,
        }
    }
}

impl GraphSettings {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.base_delay_ms),
            max_delay: Duration::from_millis(self.max_delay_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub name: String,
    pub prompt_version: PromptVersion,
    pub max_attempts: u32,
    pub concurrency: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let sampling = SamplingParams::default();
        Self {
            name: "gpt-oss-120b".into(),
            prompt_version: PromptVersion::V1,
            max_attempts: 3,
            concurrency: 4,
            temperature: sampling.temperature,
            max_tokens: sampling.max_tokens,
        }
    }
}

impl ModelSettings {
    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSettings {
    pub exponent: f64,
    pub thresholds: TierThresholds,
    pub representatives: TierRepresentatives,
    pub rule_extensions: Vec<StructuralRule>,
    /// Model score assumed for permissions missing from the risk cache.
    pub unknown_permission_score: u8,
    /// Cache model key to read scores from; defaults to the model settings.
    pub score_model: Option<String>,
}

impl Default for RiskSettings {
    fn default() -> Self {
        let params = RiskParams::default();
        Self {
            exponent: params.exponent,
            thresholds: params.thresholds,
            representatives: params.representatives,
            rule_extensions: Vec::new(),
            unknown_permission_score: 3,
            score_model: None,
        }
    }
}

impl RiskSettings {
    pub fn params(&self) -> RiskParams {
        RiskParams {
            exponent: self.exponent,
            thresholds: self.thresholds,
            representatives: self.representatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertSettings {
    #[serde(flatten)]
    pub decision: AlertConfig,
    pub dry_run: bool,
    pub delivery_attempts: u32,
    pub delivery_base_delay_ms: u64,
}

impl Default for AlertSettings {
    fn default() -> Self {
        let policy = DeliveryPolicy::default();
        Self {
            decision: AlertConfig::default(),
            dry_run: false,
            delivery_attempts: policy.max_attempts,
            delivery_base_delay_ms: policy.base_delay.as_millis() as u64,
        }
    }
}

impl AlertSettings {
    pub fn delivery_policy(&self) -> DeliveryPolicy {
        DeliveryPolicy {
            max_attempts: self.delivery_attempts,
            base_delay: Duration::from_millis(self.delivery_base_delay_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSettings {
    pub state_db: PathBuf,
    pub risk_cache: PathBuf,
}

impl Default for StoreSettings {
    fn default() -> Self {
        Self {
            state_db: "grantscope-state.db".into(),
            risk_cache: "permission-risk.db".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    /// Markdown permissions reference to parse.
    pub reference_md: Option<PathBuf>,
    pub corpus_json: PathBuf,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            reference_md: None,
            corpus_json: "permissions.json".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub graph: GraphSettings,
    pub model: ModelSettings,
    pub risk: RiskSettings,
    pub spike: SpikeConfig,
    pub alerts: AlertSettings,
    pub store: StoreSettings,
    pub corpus: CorpusSettings,
    pub scan_interval_secs: Option<u64>,
}

impl Config {
    pub const DEFAULT_INTERVAL_SECS: u64 = 3600;

    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn scan_interval(&self) -> Duration {
        Duration::from_secs(self.scan_interval_secs.unwrap_or(Self::DEFAULT_INTERVAL_SECS))
    }

    /// Cache key whose scores feed the scan pipeline.
    pub fn score_model_key(&self) -> String {
        self.risk
            .score_model
            .clone()
            .unwrap_or_else(|| cache_model_key(&self.model.name, self.model.prompt_version))
    }

    pub fn rule_set(&self) -> Result<RuleSet, ConfigError> {
        RuleSet::with_extensions(&self.risk.rule_extensions).map_err(|e| invalid("risk.rule_extensions", e))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.risk;
        if !r.exponent.is_finite() {
            return Err(invalid("risk.exponent", "must be finite"));
        }
        r.thresholds.validate().map_err(|e| invalid("risk.thresholds", e))?;
        if !(1..=5).contains(&r.unknown_permission_score) {
            return Err(invalid("risk.unknown_permission_score", "must be in 1..=5"));
        }
        self.rule_set()?;
        self.spike.validate().map_err(|e| invalid("spike", e))?;
        if self.model.max_attempts == 0 {
            return Err(invalid("model.max_attempts", "must be at least 1"));
        }
        if self.model.concurrency == 0 {
            return Err(invalid("model.concurrency", "must be at least 1"));
        }
        if self.model.name.trim().is_empty() {
            return Err(invalid("model.name", "must not be empty"));
        }
        if self.alerts.decision.top_k == 0 {
            return Err(invalid("alerts.top_k", "must be at least 1"));
        }
        if self.alerts.decision.excerpt_chars < 4 {
            return Err(invalid("alerts.excerpt_chars", "must be at least 4"));
        }
        if self.scan_interval_secs == Some(0) {
            return Err(invalid("scan_interval_secs", "must be positive"));
        }
        Ok(())
    }
}

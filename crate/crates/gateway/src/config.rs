//! Gateway configuration loading.
//!
//! The configuration file is JSON with sections `vad`, `backends`, `budget`
//! and `sim`; every field has a default so a partial (or absent) file is
//! fine. The `STEP_ORCH_CONFIG` environment variable overrides the path
//! given on the command line.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use step_orch_core::backends::LatencyModel;
use step_orch_core::controller::ControllerConfig;
use step_orch_core::session::{ScriptedContent, SessionConfig};
use step_orch_core::vad::VadConfig;
use thiserror::Error;

/// Environment variable that overrides the config file path.
pub const CONFIG_ENV: &str = "STEP_ORCH_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolScript {
    pub latency_ms: u64,
    pub payload: String,
}

impl Default for ToolScript {
    fn default() -> Self {
        Self { latency_ms: 0, payload: "{}".to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBackendsConfig {
    pub chat: LatencyModel,
    pub asr: LatencyModel,
    pub tts: LatencyModel,
    /// Responses cycled per turn.
    pub responses: Vec<String>,
    /// Transcripts cycled per turn (shaped to the 1:14 ratio on delivery).
    pub transcripts: Vec<String>,
    pub tools: BTreeMap<String, ToolScript>,
    pub tool_timeout_ms: Option<u64>,
}

impl Default for MockBackendsConfig {
    fn default() -> Self {
        Self {
            chat: LatencyModel::fixed(500, 0),
            asr: LatencyModel::fixed(300, 0),
            tts: LatencyModel::fixed(200, 0),
            responses: vec!["Okay.".to_string()],
            transcripts: vec!["mm".to_string()],
            tools: BTreeMap::new(),
            tool_timeout_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendsConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    /// Forwarded verbatim as `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
}

impl Default for HttpBackendsConfig {
    fn default() -> Self {
        Self { base_url: "http://127.0.0.1:8080".to_string(), timeout_ms: 10_000, bearer_token: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BackendsConfig {
    pub mode: BackendMode,
    pub mock: MockBackendsConfig,
    pub http: HttpBackendsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimDefaults {
    pub seed: u64,
}

impl Default for SimDefaults {
    fn default() -> Self {
        Self { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct GatewayConfig {
    pub vad: VadConfig,
    pub backends: BackendsConfig,
    pub budget: Budget,
    pub sim: SimDefaults,
    pub system_prompt: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Budget(pub usize);

impl Default for Budget {
    fn default() -> Self {
        Self(4096)
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vad.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.budget.0 == 0 {
            return Err(ConfigError::Invalid("budget must be positive".into()));
        }
        Ok(())
    }

    /// Session wiring for one connection. `external` selects HTTP backends.
    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            vad: self.vad.clone(),
            segmenter: Default::default(),
            controller: ControllerConfig {
                speculation_enabled: true,
                prompt_budget: self.budget.0,
                system_prompt: self.system_prompt.clone(),
                context: Default::default(),
            },
            chat_latency: self.backends.mock.chat,
            asr_latency: self.backends.mock.asr,
            tts_latency: self.backends.mock.tts,
            tool_timeout_ms: self.backends.mock.tool_timeout_ms,
            seed: self.sim.seed,
            external_backends: self.backends.mode == BackendMode::Http,
        }
    }

    pub fn scripted_content(&self) -> ScriptedContent {
        ScriptedContent {
            responses: self.backends.mock.responses.clone(),
            transcripts: self.backends.mock.transcripts.clone(),
            tools: self
                .backends
                .mock
                .tools
                .iter()
                .map(|(name, t)| (name.clone(), (t.latency_ms, t.payload.clone())))
                .collect(),
        }
    }
}

/// Resolve and load the configuration. Priority: `STEP_ORCH_CONFIG`
/// environment variable, then the explicit path, then built-in defaults.
pub fn load_config(explicit: Option<&Path>) -> Result<GatewayConfig, ConfigError> {
    let path = match std::env::var_os(CONFIG_ENV) {
        Some(p) => Some(PathBuf::from(p)),
        None => explicit.map(|p| p.to_path_buf()),
    };
    let Some(path) = path else {
        return Ok(GatewayConfig::default());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
    let cfg: GatewayConfig =
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path, source })?;
    cfg.validate()?;
    Ok(cfg)
}

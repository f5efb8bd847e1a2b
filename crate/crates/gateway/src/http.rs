//! Thin HTTP clients for external backend services.
//!
//! Each service is one POST endpoint with a JSON body:
//!
//! | endpoint   | request                                   | response                          |
//! |------------|-------------------------------------------|-----------------------------------|
//! | `/v1/chat` | `{"turns": [{role,text}], "live_audio": [ids]}` | `{"text": "..."}`           |
//! | `/v1/asr`  | `{"tokens": [ids]}`                       | `{"text": "..."}`                 |
//! | `/v1/tts`  | `{"text": "..."}`                         | `{"pcm_b64": "...", "duration_ms": n}` |
//! | `/v1/tool` | `{"call_id": n, "name": "...", "args": "..."}` | `{"payload": "..."}`         |
//!
//! Responses arrive whole (no streaming); the session converts a chat
//! completion into a first-token/chunk/done event triple at arrival time.
//! A configured bearer token is passed through verbatim; there is no other
//! authentication.

use crate::config::HttpBackendsConfig;
use base64::Engine;
use serde::Deserialize;
use serde_json::json;
use std::time::Duration;
use step_orch_core::context::PromptSnapshot;
use step_orch_core::controller::ToolCallDirective;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpBackendError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("bad response from {endpoint}: {detail}")]
    BadResponse { endpoint: &'static str, detail: String },
}

#[derive(Debug, Clone)]
pub struct TtsResult {
    pub pcm: Vec<u8>,
    pub duration_ms: u64,
}

pub struct HttpBackendClient {
    base: String,
    bearer: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackendClient {
    pub fn new(cfg: &HttpBackendsConfig) -> Result<Self, HttpBackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()?;
        Ok(Self {
            base: cfg.base_url.trim_end_matches('/').to_string(),
            bearer: cfg.bearer_token.clone(),
            client,
        })
    }

    fn post(
        &self,
        endpoint: &'static str,
        body: serde_json::Value,
    ) -> Result<serde_json::Value, HttpBackendError> {
        let mut req = self.client.post(format!("{}{}", self.base, endpoint)).json(&body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send()?;
        let status = resp.status();
        if !status.is_success() {
            return Err(HttpBackendError::BadResponse {
                endpoint,
                detail: format!("status {status}"),
            });
        }
        Ok(resp.json()?)
    }

    pub fn chat(&self, snapshot: &PromptSnapshot) -> Result<String, HttpBackendError> {
        #[derive(Deserialize)]
        struct Resp {
            text: String,
        }
        let body = snapshot.to_json();
        let value = self.post("/v1/chat", body)?;
        let resp: Resp = serde_json::from_value(value).map_err(|e| HttpBackendError::BadResponse {
            endpoint: "/v1/chat",
            detail: e.to_string(),
        })?;
        Ok(resp.text)
    }

    pub fn asr(&self, token_ids: &[u32]) -> Result<String, HttpBackendError> {
        #[derive(Deserialize)]
        struct Resp {
            text: String,
        }
        let value = self.post("/v1/asr", json!({ "tokens": token_ids }))?;
        let resp: Resp = serde_json::from_value(value).map_err(|e| HttpBackendError::BadResponse {
            endpoint: "/v1/asr",
            detail: e.to_string(),
        })?;
        Ok(resp.text)
    }

    pub fn tts(&self, text: &str) -> Result<TtsResult, HttpBackendError> {
        #[derive(Deserialize)]
        struct Resp {
            pcm_b64: String,
            duration_ms: u64,
        }
        let value = self.post("/v1/tts", json!({ "text": text }))?;
        let resp: Resp = serde_json::from_value(value).map_err(|e| HttpBackendError::BadResponse {
            endpoint: "/v1/tts",
            detail: e.to_string(),
        })?;
        let pcm = base64::engine::general_purpose::STANDARD.decode(resp.pcm_b64).map_err(|e| {
            HttpBackendError::BadResponse { endpoint: "/v1/tts", detail: e.to_string() }
        })?;
        Ok(TtsResult { pcm, duration_ms: resp.duration_ms })
    }

    pub fn tool(&self, directive: &ToolCallDirective) -> Result<String, HttpBackendError> {
        #[derive(Deserialize)]
        struct Resp {
            payload: String,
        }
        let body = json!({
            "call_id": directive.call_id,
            "name": directive.name,
            "args": directive.args,
        });
        let value = self.post("/v1/tool", body)?;
        let resp: Resp = serde_json::from_value(value).map_err(|e| HttpBackendError::BadResponse {
            endpoint: "/v1/tool",
            detail: e.to_string(),
        })?;
        Ok(resp.payload)
    }
}

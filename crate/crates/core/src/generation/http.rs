//! HTTP adapters: AUTOMATIC1111-style diffusion servers and hosted image APIs.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{ensure_png, BackendError, BackendParams, GeneratedImage, ImageBackend};

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs `body` and returns the JSON reply, classifying HTTP failures.
fn post_json(agent: &ureq::Agent, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, BackendError> {
    let mut req = agent.post(url);
    if let Some(key) = bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| BackendError::Transport(format!("reading response: {e}")))?;
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string())),
        408 | 429 | 500..=599 => Err(BackendError::Transport(format!("HTTP {status}: {text}"))),
        _ => Err(BackendError::Rejected(format!("HTTP {status}: {text}"))),
    }
}

fn decode_b64(s: &str) -> Result<Vec<u8>, BackendError> {
    let payload = s.split_once("base64,").map_or(s, |(_, p)| p);
    base64::engine::general_purpose::STANDARD
        .decode(payload.trim())
        .map_err(|e| BackendError::InvalidResponse(format!("bad base64 image: {e}")))
}

/// AUTOMATIC1111 web UI API, `POST /sdapi/v1/txt2img`.
#[derive(Debug, Clone)]
pub struct A1111Backend {
    base_url: String,
    agent: ureq::Agent,
}

impl A1111Backend {
    pub fn new(base_url: impl Into<String>, timeout_secs: u64) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent: agent(timeout_secs),
        }
    }
}

impl ImageBackend for A1111Backend {
    fn id(&self) -> String {
        format!("a1111@{}", self.base_url)
    }

    fn generate(&self, prompt: &str, seed: u64, params: &BackendParams) -> Result<GeneratedImage, BackendError> {
        let mut body = Map::new();
        body.insert("prompt".into(), json!(prompt));
        body.insert("seed".into(), json!(seed));
        body.insert("width".into(), json!(params.width));
        body.insert("height".into(), json!(params.height));
        body.insert("steps".into(), json!(params.steps));
        body.insert("cfg_scale".into(), json!(params.guidance));
        body.insert("batch_size".into(), json!(1));
        body.insert("n_iter".into(), json!(1));
        for (k, v) in &params.extra {
            body.insert(k.clone(), v.clone());
        }
        let url = format!("{}/sdapi/v1/txt2img", self.base_url);
        let v = post_json(&self.agent, &url, None, &Value::Object(body))?;
        let b64 = v
            .pointer("/images/0")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::InvalidResponse("no images in response".into()))?;
        Ok(GeneratedImage {
            png: ensure_png(decode_b64(b64)?)?,
            face_bbox: None,
            seed_honored: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiImagesConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for OpenAiImagesConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/images/generations".into(),
            model: "dall-e-2".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

/// Hosted image API (`b64_json` responses). The service takes no seed, so
/// the recorded seed is advisory and `steps`/`guidance` are not sent.
#[derive(Debug, Clone)]
pub struct OpenAiImagesBackend {
    config: OpenAiImagesConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl OpenAiImagesBackend {
    pub fn from_env(config: OpenAiImagesConfig) -> Result<Self, String> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| format!("environment variable {} is not set", config.api_key_env))?;
        let agent = agent(config.timeout_secs);
        Ok(Self { config, api_key, agent })
    }
}

impl ImageBackend for OpenAiImagesBackend {
    fn id(&self) -> String {
        format!("openai-images:{}", self.config.model)
    }

    fn generate(&self, prompt: &str, _seed: u64, params: &BackendParams) -> Result<GeneratedImage, BackendError> {
        let mut body = Map::new();
        body.insert("model".into(), json!(self.config.model));
        body.insert("prompt".into(), json!(prompt));
        body.insert("n".into(), json!(1));
        body.insert("size".into(), json!(format!("{}x{}", params.width, params.height)));
        body.insert("response_format".into(), json!("b64_json"));
        for (k, v) in &params.extra {
            body.insert(k.clone(), v.clone());
        }
        let v = post_json(&self.agent, &self.config.endpoint, Some(&self.api_key), &Value::Object(body))?;
        let b64 = v
            .pointer("/data/0/b64_json")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::InvalidResponse("no b64_json image in response".into()))?;
        Ok(GeneratedImage {
            png: ensure_png(decode_b64(b64)?)?,
            face_bbox: None,
            seed_honored: false,
        })
    }
}

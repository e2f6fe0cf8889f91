use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{DemographicQuery, DemographicsError};

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

/// Single text-in, JSON-text-out call.
pub trait LlmProvider: Send + Sync {
    /// Stable identifier, part of the cache key.
    fn id(&self) -> String;
    fn complete(&self, instruction: &str) -> Result<String, DemographicsError>;
}

/// Instruction sent for a demographic query. Embeds the response schema and
/// the rule for prompts without population statistics.
pub fn instruction_for(query: &DemographicQuery) -> String {
    format!(
        r#"You provide demographic statistics for image-generation prompts.

Concept: "{concept}"
Original prompt: "{prompt}"
Population scope: {scope}

Return the race/ethnicity composition of people who are "{concept}" in {scope}, using the most authoritative statistics you know (for example national labor or census data), and cite them.

Respond with a single JSON object and nothing else, matching exactly:
{{"concept": string, "scope": string, "groups": [{{"label": string, "proportion": number}}], "confidence": number, "sources": [string]}}

Rules:
- proportions are fractions in [0, 1] that sum to 1; keep any residual as an explicit "Other" group.
- confidence is your confidence in [0, 1] that the figures are accurate for this scope.
- sources lists the citations for the figures.
- If the prompt is ill-defined or lacks known population-level statistics (for example "a happy person"), return a confidence score of 0.0 with no demographic data: an empty "groups" list."#,
        concept = query.concept,
        prompt = query.base_prompt,
        scope = query.scope.describe(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// OpenAI-compatible chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60,
        }
    }
}

/// Chat-completions client for any OpenAI-compatible endpoint.
pub struct OpenAiChatProvider {
    config: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl OpenAiChatProvider {
    /// Fails with a configuration error when the API key variable is unset.
    pub fn from_env(config: ProviderConfig) -> Result<Self, DemographicsError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                DemographicsError::Config(format!("environment variable {} is not set", config.api_key_env))
            })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }
}

impl LlmProvider for OpenAiChatProvider {
    fn id(&self) -> String {
        format!("openai-chat:{}@{}", self.config.model, self.config.endpoint)
    }

    fn complete(&self, instruction: &str) -> Result<String, DemographicsError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [{"role": "user", "content": instruction}],
        });
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| DemographicsError::Transport(e.to_string()))?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| DemographicsError::Transport(format!("unreadable response: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| DemographicsError::Schema("chat response has no message content".into()))
    }
}

/// Canned responses keyed by concept, or by `concept@scope` for a
/// scope-specific answer. Unknown concepts get a confidence-0.0 reply.
#[derive(Debug, Default)]
pub struct FixtureProvider {
    responses: HashMap<String, String>,
    calls: AtomicUsize,
}

impl FixtureProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, key: &str, raw: impl Into<String>) -> Self {
        self.responses.insert(key.to_lowercase(), raw.into());
        self
    }

    /// Reads a JSON object mapping keys to response objects (or raw strings).
    pub fn from_file(path: &Path) -> Result<Self, DemographicsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DemographicsError::Config(format!("{}: {e}", path.display())))?;
        let map: HashMap<String, Value> = serde_json::from_str(&text)
            .map_err(|e| DemographicsError::Config(format!("{}: {e}", path.display())))?;
        let mut p = Self::new();
        for (k, v) in map {
            let raw = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            p = p.with_response(&k, raw);
        }
        Ok(p)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn field<'a>(instruction: &'a str, name: &str) -> Option<&'a str> {
        let line = instruction.lines().find_map(|l| l.strip_prefix(name))?;
        Some(line.trim().trim_matches('"'))
    }
}

impl LlmProvider for FixtureProvider {
    fn id(&self) -> String {
        "fixture".into()
    }

    fn complete(&self, instruction: &str) -> Result<String, DemographicsError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let concept = Self::field(instruction, "Concept:").unwrap_or_default().to_lowercase();
        let scope = Self::field(instruction, "Population scope:").unwrap_or_default().to_lowercase();
        let scope = match scope.as_str() {
            "the united states" => "us".to_string(),
            "the global population" => "global".to_string(),
            other => other.to_string(),
        };
        let hit = [format!("{concept}@{scope}"), concept.clone()]
            .iter()
            .find_map(|k| self.responses.get(k))
            .cloned();
        Ok(hit.unwrap_or_else(|| {
            json!({"concept": concept, "scope": scope, "groups": [], "confidence": 0.0, "sources": []}).to_string()
        }))
    }
}

/// Free-form rewrite of `base` for one subgroup, via the provider.
pub fn rewrite_prompt(
    provider: &dyn LlmProvider,
    base: &str,
    subgroup_phrase: &str,
) -> Result<String, DemographicsError> {
    let instruction = format!(
        "Rewrite this image-generation prompt so that it depicts {subgroup_phrase}, changing nothing else.\n\
         Prompt: \"{base}\"\n\
         Respond with a single JSON object: {{\"prompt\": string}}"
    );
    let raw = provider.complete(&instruction)?;
    #[derive(Deserialize)]
    struct Rewrite {
        prompt: String,
    }
    let r: Rewrite = serde_json::from_str(super::unfence(&raw)).map_err(|e| DemographicsError::Schema(e.to_string()))?;
    if r.prompt.trim().is_empty() {
        return Err(DemographicsError::Schema("empty rewritten prompt".into()));
    }
    Ok(r.prompt)
}

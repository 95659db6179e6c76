use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{build_prompt, parse_response, DecisionContext, DecisionProvider, ProviderConfig, ProviderUnavailable};
use crate::lob::Side;

/// Appended to the prompt when the previous reply could not be parsed.
pub const RETRY_NOTE: &str = "Your previous answer could not be parsed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking chat-completions client.
pub struct RemoteProvider {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model_name)
            .finish_non_exhaustive()
    }
}

impl RemoteProvider {
    pub fn new(cfg: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .new_agent();
        let api_key = cfg
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty());
        Self { cfg, agent, api_key }
    }

    pub fn request_body(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            model: self.cfg.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature: self.cfg.temperature,
        }
    }

    /// Sends one prompt and returns the first choice's content.
    pub fn complete(&self, prompt: String) -> Result<String, String> {
        let endpoint = self.cfg.endpoint.as_deref().ok_or("no endpoint configured")?;
        let mut request = self.agent.post(endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let response = request
            .send_json(self.request_body(prompt))
            .map_err(|e| format!("transport: {e}"))?;
        let reply: ChatResponse = response
            .into_body()
            .read_json()
            .map_err(|e| format!("malformed completion body: {e}"))?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| "completion has no choices".into())
    }
}

impl DecisionProvider for RemoteProvider {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Side, ProviderUnavailable> {
        let base = build_prompt(ctx);
        let mut prompt = base.clone();
        let mut last_error = String::new();
        let attempts = self.cfg.max_retries + 1;
        for attempt in 0..attempts {
            match self.complete(prompt.clone()) {
                Ok(text) => match parse_response(&text) {
                    Ok(decision) => return Ok(decision.side()),
                    Err(e) => {
                        last_error = e.to_string();
                        prompt = format!(
                            "{base}{RETRY_NOTE} ({e}). Answer again using exactly the JSON answer format.\n"
                        );
                    }
                },
                Err(e) => {
                    last_error = e;
                    if attempt + 1 < attempts && self.cfg.retry_backoff_ms > 0 {
                        let wait = self.cfg.retry_backoff_ms.saturating_mul(1 << attempt.min(10));
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                }
            }
        }
        Err(ProviderUnavailable {
            attempts,
            reason: last_error,
        })
    }

    fn name(&self) -> String {
        format!("remote:{}", self.cfg.model_name)
    }
}

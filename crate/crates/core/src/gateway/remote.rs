//! Chat-completion client for OpenAI-compatible HTTP endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendConfig, GatewayError, GenRequest};

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
}

enum Attempt {
    Retry(GatewayError),
    Fatal(GatewayError),
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let base = cfg
            .base_url
            .as_deref()
            .ok_or_else(|| GatewayError::InvalidConfig("remote backend requires base_url".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Send one chat completion, retrying transport errors, 429 and 5xx with
    /// exponential backoff.
    pub fn complete(&self, cfg: &BackendConfig, req: &GenRequest) -> Result<String, GatewayError> {
        let key_var = cfg.api_key_env.as_deref().unwrap_or("OPENAI_API_KEY");
        let key = std::env::var(key_var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::AuthMissing(key_var.to_string()))?;

        let mut messages = Vec::with_capacity(2);
        if !req.system_text.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: &req.system_text,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: &req.user_text,
        });
        let body = ChatRequest {
            model: &cfg.model_name,
            messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };

        let mut last = GatewayError::BackendUnreachable("no attempt made".into());
        for attempt in 0..cfg.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(cfg.retry_base_ms << (attempt - 1)));
            }
            match self.attempt(&key, &body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => last = e,
            }
        }
        Err(last)
    }

    fn attempt(&self, key: &str, body: &ChatRequest<'_>) -> Result<String, Attempt> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(GatewayError::BackendUnreachable(e.to_string())))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| Attempt::Retry(GatewayError::BackendUnreachable(e.to_string())))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(GatewayError::BackendRejected {
                status: status.as_u16(),
                body: text,
            }));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(GatewayError::BackendRejected {
                status: status.as_u16(),
                body: text,
            }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(GatewayError::BackendUnreachable(format!("undecodable response: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or(Attempt::Fatal(GatewayError::EmptyResponse))
    }
}

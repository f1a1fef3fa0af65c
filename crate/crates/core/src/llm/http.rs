use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, BackendError, CompletionBackend, CompletionRequest};

/// Request body of a chat-completions call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
}

impl ChatRequest {
    pub fn from_completion(model: &str, req: &CompletionRequest) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: req.prompt.clone(),
            }],
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
        }
    }
}

/// Chat-completions client. The key is read from the configured environment
/// variable once, at construction, and sent as a bearer token.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
    max_attempts: u32,
    initial_backoff: Duration,
}

impl HttpBackend {
    pub fn new(desc: &BackendDescriptor) -> Result<Self, BackendError> {
        let endpoint = desc
            .endpoint
            .clone()
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| BackendError::Config("http backend requires an endpoint".into()))?;
        let var = desc
            .credentials_env_var
            .as_deref()
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| {
                BackendError::Config("http backend requires credentials_env_var".into())
            })?;
        let api_key = std::env::var(var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(desc.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model: desc.model_name.clone(),
            api_key,
            max_attempts: desc.max_attempts.max(1),
            initial_backoff: Duration::from_millis(desc.initial_backoff_ms),
        })
    }

    fn attempt(&self, body: &ChatRequest) -> Result<String, BackendError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(status)),
            _ => {
                return Err(BackendError::Status {
                    status,
                    body: text.chars().take(200).collect(),
                })
            }
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices in response".into()))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let body = ChatRequest::from_completion(&self.model, req);
        let mut backoff = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.max_attempts => {
                    tracing::warn!(attempt, error = %e, "retrying completion");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

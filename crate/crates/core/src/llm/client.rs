//! OpenAI-compatible chat-completions client.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Mutex;

use crate::error::{Error, Result};
use crate::http;
use crate::llm::generate::GenerationConfig;
use crate::llm::prompt::ChatPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body for `POST /v1/chat/completions`. `top_k` and `min_p` are
/// provider extensions (vLLM and friends accept them at the top level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_p: Option<f64>,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(config: &GenerationConfig, prompt: &ChatPrompt) -> Self {
        ChatRequest {
            model: config.model_id.clone(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: prompt.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: prompt.user.clone(),
                },
            ],
            temperature: config.temperature,
            top_p: config.top_p,
            top_k: config.top_k,
            min_p: config.send_min_p.then_some(config.min_p),
            max_tokens: config.max_tokens,
        }
    }
}

#[async_trait]
pub trait ChatClient: Send + Sync {
    fn endpoint(&self) -> &str;

    /// Sends exactly one request and returns `choices[0].message.content`.
    /// Retrying is the caller's job.
    async fn complete(&self, request: &ChatRequest) -> Result<String>;
}

/// Spaces requests at least `interval` apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_second(requests: f64) -> Option<Self> {
        (requests.is_finite() && requests > 0.0).then(|| RateLimiter {
            interval: Duration::from_secs_f64(1.0 / requests),
            next: Mutex::new(None),
        })
    }

    pub async fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().await;
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
    }
}

#[derive(Debug)]
pub struct OpenAiChatClient {
    client: reqwest::Client,
    url: String,
    limiter: Option<RateLimiter>,
}

impl OpenAiChatClient {
    /// `endpoint` is the server base URL; `/v1/chat/completions` is appended.
    pub fn new(endpoint: &str, timeout: Duration, requests_per_second: Option<f64>) -> Result<Self> {
        let base = endpoint.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        Ok(OpenAiChatClient {
            client: http::build_client(timeout)?,
            url: http::join_url(base, "/v1/chat/completions"),
            limiter: requests_per_second.and_then(RateLimiter::per_second),
        })
    }
}

pub(crate) fn extract_content(endpoint: &str, body: &Value) -> Result<String> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Transport {
            endpoint: endpoint.to_string(),
            message: "response has no choices[0].message.content".into(),
        })
}

#[async_trait]
impl ChatClient for OpenAiChatClient {
    fn endpoint(&self) -> &str {
        &self.url
    }

    async fn complete(&self, request: &ChatRequest) -> Result<String> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire().await;
        }
        let body = serde_json::to_value(request)?;
        let response = http::post_json_once(&self.client, &self.url, &body).await?;
        extract_content(&self.url, &response)
    }
}

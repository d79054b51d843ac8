//! JSON-over-HTTP helpers shared by the embedding and chat clients.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Exponential backoff settings for retried requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(20);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

pub fn build_client(timeout: Duration) -> Result<reqwest::Client> {
    reqwest::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))
}

/// Joins a base URL and an absolute path without doubling slashes.
pub fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// One POST. Non-2xx statuses and undecodable bodies become transport errors
/// naming the endpoint.
pub async fn post_json_once(client: &reqwest::Client, url: &str, body: &Value) -> Result<Value> {
    let transport = |message: String| Error::Transport {
        endpoint: url.to_string(),
        message,
    };
    let response = client
        .post(url)
        .json(body)
        .send()
        .await
        .map_err(|e| transport(e.to_string()))?;
    let status = response.status();
    let text = response.text().await.map_err(|e| transport(e.to_string()))?;
    if !status.is_success() {
        let snippet: String = text.chars().take(200).collect();
        return Err(transport(format!("HTTP {}: {snippet}", status.as_u16())));
    }
    serde_json::from_str(&text).map_err(|e| transport(format!("malformed response body: {e}")))
}

/// POST with retries on transport errors.
pub async fn post_json_with_retry(
    client: &reqwest::Client,
    url: &str,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<Value> {
    let mut retry = 0;
    loop {
        match post_json_once(client, url, body).await {
            Ok(v) => return Ok(v),
            Err(e @ Error::Transport { .. }) if retry < policy.max_retries => {
                retry += 1;
                log::warn!("{e}; retry {retry}/{}", policy.max_retries);
                tokio::time::sleep(policy.backoff(retry)).await;
            }
            Err(e) => return Err(e),
        }
    }
}

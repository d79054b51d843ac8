use std::time::Duration;

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use crate::datamodel::{HardNegativeSet, Negative, Passage, QueryPositivePair, SourceTag};
use crate::error::{Error, Result};
use crate::http::RetryPolicy;
use crate::llm::client::{ChatClient, ChatRequest};
use crate::llm::parse::{parse_passages, validate_passages, word_count, Violation};
use crate::llm::prompt::render_prompt;

/// What to do with passages outside the 75–100 word range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthPolicy {
    /// Keep them, flagged.
    #[default]
    Lenient,
    /// Treat the response as a failed attempt and ask again.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub min_p: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub request_timeout_secs: u64,
    /// Omit `min_p` from requests for providers that reject unknown fields.
    pub send_min_p: bool,
    pub length_policy: LengthPolicy,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        GenerationConfig {
            model_id: String::new(),
            temperature: 0.6,
            top_p: 0.95,
            top_k: 20,
            min_p: 0.0,
            max_tokens: 1024,
            max_retries: 3,
            request_timeout_secs: 120,
            send_min_p: true,
            length_policy: LengthPolicy::Lenient,
            initial_backoff_ms: retry.initial_backoff_ms,
            max_backoff_ms: retry.max_backoff_ms,
        }
    }
}

impl GenerationConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        GenerationConfig {
            model_id: model_id.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("llm model_id is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!("temperature {} must be ≥ 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if !(0.0..=1.0).contains(&self.min_p) {
            return Err(Error::Config(format!("min_p {} must be in [0, 1]", self.min_p)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff_ms: self.initial_backoff_ms,
            max_backoff_ms: self.max_backoff_ms,
        }
    }
}

/// Bookkeeping for one pair's generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub query_id: String,
    pub model_id: String,
    pub raw_response: String,
    pub parsed: Vec<String>,
    pub word_counts: Vec<usize>,
    pub attempts: u32,
    /// `"<passage>:<label>"` for accepted output, or the parse error of
    /// each failed attempt.
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Failure {
    Transport(Error),
    Content(String),
}

/// Asks the model for five negatives, retrying the identical request on
/// transport errors (with exponential backoff) and on unparseable output,
/// for at most `max_retries + 1` requests in total.
pub async fn generate_hard_negatives(
    client: &dyn ChatClient,
    pair: &QueryPositivePair,
    config: &GenerationConfig,
) -> Result<(HardNegativeSet, GenerationRecord)> {
    let prompt = render_prompt(pair)?;
    let request = ChatRequest::new(config, &prompt);
    let policy = config.retry_policy();
    let mut record = GenerationRecord {
        query_id: pair.query_id.clone(),
        model_id: config.model_id.clone(),
        prompt_flags: prompt.flags.clone(),
        ..Default::default()
    };
    let mut last_failure = None;
    let mut transport_retries = 0;

    for attempt in 1..=config.max_retries + 1 {
        record.attempts = attempt;
        let raw = match client.complete(&request).await {
            Ok(raw) => raw,
            Err(e @ Error::Transport { .. }) => {
                log::warn!("query {} attempt {attempt}: {e}", pair.query_id);
                last_failure = Some(Failure::Transport(e));
                if attempt <= config.max_retries {
                    transport_retries += 1;
                    tokio::time::sleep(policy.backoff(transport_retries)).await;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        record.raw_response = raw;
        let passages = match parse_passages(&record.raw_response) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("query {} attempt {attempt}: {e}", pair.query_id);
                record.violations.push(format!("attempt {attempt}: {e}"));
                last_failure = Some(Failure::Content(e.to_string()));
                continue;
            }
        };
        let violations = validate_passages(&passages, &pair.positive.text);
        if config.length_policy == LengthPolicy::Strict && violations.iter().any(|v| v.kind.is_length()) {
            let labels: Vec<String> = violations.iter().map(Violation::to_string).collect();
            record.violations.push(format!("attempt {attempt}: length {}", labels.join(",")));
            last_failure = Some(Failure::Content(format!("length violations {}", labels.join(","))));
            continue;
        }

        record.violations = violations.iter().map(Violation::to_string).collect();
        record.word_counts = passages.iter().map(|p| word_count(p)).collect();
        record.parsed = passages.clone();
        let source = SourceTag::Llm(config.model_id.clone());
        let negatives = passages
            .into_iter()
            .enumerate()
            .map(|(i, text)| Negative {
                passage: Passage::new(format!("{}#{}#{}", pair.query_id, source, i + 1), "", text),
                score: None,
                flags: violations
                    .iter()
                    .filter(|v| v.index == i)
                    .map(|v| v.kind.as_str().to_string())
                    .collect(),
            })
            .collect();
        let set = HardNegativeSet {
            query_id: pair.query_id.clone(),
            source,
            negatives,
            attempts: Some(attempt),
        };
        return Ok((set, record));
    }

    match last_failure {
        Some(Failure::Transport(Error::Transport { endpoint, message })) => Err(Error::Transport {
            endpoint,
            message: format!("{message} (after {} attempts)", record.attempts),
        }),
        Some(Failure::Content(reason)) => Err(Error::GenerationExhausted {
            query_id: pair.query_id.clone(),
            attempts: record.attempts,
            reason,
            last_raw: Some(record.raw_response),
        }),
        _ => Err(Error::GenerationExhausted {
            query_id: pair.query_id.clone(),
            attempts: record.attempts,
            reason: "no attempts made".into(),
            last_raw: None,
        }),
    }
}

/// Generates for many pairs with at most `parallelism` requests in flight.
/// Results come back in input order.
pub async fn generate_many(
    client: &dyn ChatClient,
    pairs: &[QueryPositivePair],
    config: &GenerationConfig,
    parallelism: usize,
) -> Vec<Result<(HardNegativeSet, GenerationRecord)>> {
    futures::stream::iter(pairs)
        .map(|pair| async move {
            let start = std::time::Instant::now();
            let result = generate_hard_negatives(client, pair, config).await;
            log::info!(
                "generate {} {} in {:.2?}",
                pair.query_id,
                if result.is_ok() { "ok" } else { "failed" },
                start.elapsed()
            );
            result
        })
        .buffered(parallelism.max(1))
        .collect()
        .await
}

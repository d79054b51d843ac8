//! Embedding providers and cosine-similarity negative mining.
//!
//! Mining is a full scan: every corpus vector is scored against the query
//! vector and the top `k` (minus the positive) are kept.

use std::time::Duration;

use async_trait::async_trait;
use futures::{StreamExt, TryStreamExt};
use serde::Deserialize;
use serde_json::json;

use crate::datamodel::{HardNegativeSet, Negative, PassageCorpus, QueryPositivePair, SourceTag};
use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy};
use crate::ranking;
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        let norm = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        EmbeddingVector { values, norm }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        EmbeddingVector::new(self.values.iter().map(|&v| (v as f64 / self.norm) as f32).collect())
    }

    pub fn scaled(&self, c: f32) -> Self {
        EmbeddingVector::new(self.values.iter().map(|&v| v * c).collect())
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dimension() != v.dimension() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            u.dimension(),
            v.dimension()
        )));
    }
    if u.is_zero() || v.is_zero() {
        return Err(Error::InvalidInput("cosine of a zero vector is undefined".into()));
    }
    let dot: f64 = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum();
    Ok((dot / (u.norm * v.norm)).clamp(-1.0, 1.0))
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// One vector per input text, in input order.
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

pub const HASHING_DIM: usize = 256;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline deterministic provider: hashed bag of words.
///
/// Each token is hashed with FNV-1a; `hash % dim` picks the coordinate and
/// the top bit picks the sign. Counts accumulate as integers and are only
/// converted to floats for the final unit normalization, so output is
/// identical across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashingProvider {
    model_id: String,
    dim: usize,
}

impl Default for HashingProvider {
    fn default() -> Self {
        HashingProvider::new(HASHING_DIM)
    }
}

impl HashingProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        HashingProvider {
            model_id: format!("hashed-bow-{dim}"),
            dim,
        }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut counts = vec![0i64; self.dim];
        for token in tokenize(text).iter() {
            let h = fnv1a(token.as_bytes());
            let slot = (h % self.dim as u64) as usize;
            counts[slot] += if h >> 63 == 1 { -1 } else { 1 };
        }
        let sq: i64 = counts.iter().map(|c| c * c).sum();
        if sq == 0 {
            return EmbeddingVector::new(vec![0.0; self.dim]);
        }
        let norm = (sq as f64).sqrt();
        EmbeddingVector::new(counts.iter().map(|&c| (c as f64 / norm) as f32).collect())
    }
}

#[async_trait]
impl EmbeddingProvider for HashingProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// Client for a remote embedding service:
/// `POST {endpoint}/embed {"model","input"}` → `{"data":[{"index","embedding"}],"dim"}`.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    client: reqwest::Client,
    url: String,
    model_id: String,
    dimension: usize,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f32>,
}

impl RemoteProvider {
    pub fn new(
        endpoint: &str,
        model_id: impl Into<String>,
        dimension: usize,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self> {
        Ok(RemoteProvider {
            client: http::build_client(timeout)?,
            url: http::join_url(endpoint, "/embed"),
            model_id: model_id.into(),
            dimension,
            retry,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.url
    }
}

#[async_trait]
impl EmbeddingProvider for RemoteProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let body = json!({ "model": self.model_id, "input": texts });
        let value = http::post_json_with_retry(&self.client, &self.url, &body, &self.retry).await?;
        let bad = |message: String| Error::Transport {
            endpoint: self.url.clone(),
            message,
        };
        let response: EmbedResponse =
            serde_json::from_value(value).map_err(|e| bad(format!("unexpected response shape: {e}")))?;
        if response.dim != self.dimension {
            return Err(bad(format!(
                "provider reports dimension {}, expected {}",
                response.dim, self.dimension
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for item in response.data {
            if item.embedding.len() != self.dimension {
                return Err(bad(format!("vector {} has wrong dimension", item.index)));
            }
            match slots.get_mut(item.index) {
                Some(slot @ None) => *slot = Some(EmbeddingVector::new(item.embedding)),
                _ => return Err(bad(format!("bad or repeated index {}", item.index))),
            }
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| bad(format!("missing vector for input {i}"))))
            .collect()
    }
}

/// Embeds every passage in batches of `batch_size`, keeping at most
/// `max_in_flight` batches outstanding. Output is unit-normalized and
/// aligned with corpus order.
pub async fn embed_corpus(
    provider: &dyn EmbeddingProvider,
    corpus: &PassageCorpus,
    batch_size: usize,
    max_in_flight: usize,
) -> Result<Vec<EmbeddingVector>> {
    if batch_size == 0 || max_in_flight == 0 {
        return Err(Error::InvalidInput("batch_size and max_in_flight must be ≥ 1".into()));
    }
    let texts: Vec<String> = corpus.passages().iter().map(|p| p.text.clone()).collect();
    let batches: Vec<Vec<String>> = texts.chunks(batch_size).map(<[String]>::to_vec).collect();
    let dim = provider.dimension();
    let results: Vec<Vec<EmbeddingVector>> = futures::stream::iter(batches.into_iter().enumerate())
        .map(|(i, batch)| async move {
            let first = i * batch_size;
            let describe = |e: Error| match e {
                Error::Transport { endpoint, message } => Error::Transport {
                    endpoint,
                    message: format!("batch {i} (passages {first}..{}): {message}", first + batch.len()),
                },
                other => other,
            };
            let vectors = provider.embed(&batch).await.map_err(describe)?;
            if vectors.len() != batch.len() || vectors.iter().any(|v| v.dimension() != dim) {
                return Err(Error::InvalidInput(format!(
                    "provider {} returned a malformed batch {i}",
                    provider.model_id()
                )));
            }
            Ok(vectors)
        })
        .buffered(max_in_flight)
        .try_collect()
        .await?;
    Ok(results.into_iter().flatten().map(|v| v.normalized()).collect())
}

/// Top-`k` corpus passages by cosine similarity to `query`, excluding the
/// pair's positive. Passages with a zero vector score 0.
pub fn mine_embed_with_query(
    model_id: &str,
    query: &EmbeddingVector,
    corpus: &PassageCorpus,
    corpus_vectors: &[EmbeddingVector],
    pair: &QueryPositivePair,
    k: usize,
) -> Result<HardNegativeSet> {
    if corpus_vectors.len() != corpus.len() {
        return Err(Error::InvalidInput(format!(
            "{} vectors for a corpus of {}",
            corpus_vectors.len(),
            corpus.len()
        )));
    }
    if query.is_zero() {
        return Err(Error::InvalidInput(format!(
            "query {} embeds to the zero vector",
            pair.query_id
        )));
    }
    let excluded = crate::bm25::excluded_positions(corpus, pair);
    crate::bm25::check_k(k, corpus, excluded.len(), &pair.query_id)?;
    let scores = similarities(query, corpus_vectors)?;
    let ids: Vec<&str> = corpus.passages().iter().map(|p| p.doc_id.as_str()).collect();
    let top = ranking::top_k(&scores, &ids, k, |i| excluded.binary_search(&i).is_ok());
    Ok(HardNegativeSet {
        query_id: pair.query_id.clone(),
        source: SourceTag::Embed(model_id.to_string()),
        negatives: top
            .into_iter()
            .map(|(pos, score)| Negative {
                passage: corpus.passages()[pos].clone(),
                score: Some(score),
                flags: vec![],
            })
            .collect(),
        attempts: None,
    })
}

pub(crate) fn similarities(query: &EmbeddingVector, vectors: &[EmbeddingVector]) -> Result<Vec<f64>> {
    vectors
        .iter()
        .map(|v| if v.is_zero() { Ok(0.0) } else { cosine(query, v) })
        .collect()
}

/// Embeds the pair's query with `provider` and mines against the corpus.
pub async fn mine_embed(
    provider: &dyn EmbeddingProvider,
    corpus: &PassageCorpus,
    corpus_vectors: &[EmbeddingVector],
    pair: &QueryPositivePair,
    k: usize,
) -> Result<HardNegativeSet> {
    let query = provider
        .embed(std::slice::from_ref(&pair.query))
        .await?
        .pop()
        .ok_or_else(|| Error::InvalidInput("provider returned no query vector".into()))?;
    mine_embed_with_query(provider.model_id(), &query, corpus, corpus_vectors, pair, k)
}

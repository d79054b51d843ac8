//! Okapi BM25 over the tokenized corpus, and top-k negative mining.
//!
//! ```text
//! idf(t)     = ln((N - n_t + 0.5) / (n_t + 0.5) + 1)
//! score(q,d) = Σ_{t ∈ q} idf(t) · f(t,d)·(k1+1) / (f(t,d) + k1·(1 - b + b·|d|/avgdl))
//! ```
//!
//! Query terms are summed per occurrence, so a repeated query term counts
//! repeatedly. An idf that comes out negative is replaced by
//! `epsilon × mean(positive idf)`; with the `+1` form above that only
//! happens for degenerate inputs, but the floor keeps scores non-negative.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{HardNegativeSet, Negative, PassageCorpus, QueryPositivePair, SourceTag};
use crate::error::{Error, Result};
use crate::ranking;
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.5,
            b: 0.75,
            epsilon: 0.25,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k1.is_finite()
            && self.k1 >= 0.0
            && self.b.is_finite()
            && (0.0..=1.0).contains(&self.b)
            && self.epsilon.is_finite()
            && self.epsilon >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid BM25 parameters {self:?}")))
        }
    }
}

/// Default number of mined negatives per pair.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    avgdl: f64,
    df: HashMap<String, usize>,
    tf: Vec<HashMap<String, u32>>,
    postings: HashMap<String, Vec<(u32, u32)>>,
    idf: HashMap<String, f64>,
}

pub fn idf_value(n_docs: usize, doc_freq: usize) -> f64 {
    let n = n_docs as f64;
    let nt = doc_freq as f64;
    ((n - nt + 0.5) / (nt + 0.5) + 1.0).ln()
}

pub fn build_index(corpus: &PassageCorpus, params: Bm25Params) -> Result<Bm25Index> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot index an empty corpus".into()));
    }
    let n_docs = corpus.len();
    let mut doc_ids = Vec::with_capacity(n_docs);
    let mut doc_len = Vec::with_capacity(n_docs);
    let mut tf = Vec::with_capacity(n_docs);
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();

    for (pos, passage) in corpus.passages().iter().enumerate() {
        let tokens = tokenize(&passage.text);
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in tokens.iter() {
            *counts.entry(t.clone()).or_default() += 1;
        }
        for (term, &count) in &counts {
            *df.entry(term.clone()).or_default() += 1;
            postings.entry(term.clone()).or_default().push((pos as u32, count));
        }
        doc_ids.push(passage.doc_id.clone());
        doc_len.push(tokens.len());
        tf.push(counts);
    }
    let avgdl = doc_len.iter().sum::<usize>() as f64 / n_docs as f64;

    let mut idf: HashMap<String, f64> = df
        .iter()
        .map(|(t, &n)| (t.clone(), idf_value(n_docs, n)))
        .collect();
    let mut positive: Vec<f64> = idf.values().copied().filter(|&v| v > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    if positive.len() < idf.len() {
        let mean = if positive.is_empty() {
            0.0
        } else {
            positive.iter().sum::<f64>() / positive.len() as f64
        };
        let floor = params.epsilon * mean;
        for v in idf.values_mut() {
            if *v < 0.0 {
                *v = floor;
            }
        }
    }

    Ok(Bm25Index {
        params,
        doc_ids,
        doc_len,
        avgdl,
        df,
        tf,
        postings,
        idf,
    })
}

impl Bm25Index {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, pos: usize) -> usize {
        self.doc_len[pos]
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    fn term_weight(&self, idf: f64, tf: f64, dl: f64) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / self.avgdl))
    }

    /// Score of one document. Unknown query terms contribute 0.
    pub fn score(&self, query_tokens: &[String], doc_id: &str) -> Result<f64> {
        let pos = self
            .doc_ids
            .iter()
            .position(|d| d == doc_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown doc_id {doc_id}")))?;
        Ok(self.score_at(query_tokens, pos))
    }

    pub fn score_at(&self, query_tokens: &[String], pos: usize) -> f64 {
        let dl = self.doc_len[pos] as f64;
        let mut total = 0.0;
        for t in query_tokens {
            if let (Some(&idf), Some(&f)) = (self.idf.get(t), self.tf[pos].get(t)) {
                total += self.term_weight(idf, f as f64, dl);
            }
        }
        total
    }

    /// Scores for every document, aligned with corpus order.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<f64> {
        let mut acc = vec![0.0; self.doc_ids.len()];
        for t in query_tokens {
            let (Some(&idf), Some(list)) = (self.idf.get(t), self.postings.get(t)) else {
                continue;
            };
            for &(pos, f) in list {
                let pos = pos as usize;
                acc[pos] += self.term_weight(idf, f as f64, self.doc_len[pos] as f64);
            }
        }
        acc
    }
}

/// Corpus positions that must never be returned as negatives for `pair`.
pub(crate) fn excluded_positions(corpus: &PassageCorpus, pair: &QueryPositivePair) -> Vec<usize> {
    let mut out: Vec<usize> = std::iter::once(&pair.positive)
        .chain(&pair.alternates)
        .flat_map(|p| [corpus.position(&p.doc_id), corpus.position_by_text(&p.text)])
        .flatten()
        .collect();
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        log::warn!(
            "positive {} of query {} is not in the corpus",
            pair.positive.doc_id,
            pair.query_id
        );
    }
    out
}

pub(crate) fn check_k(k: usize, corpus: &PassageCorpus, excluded: usize, query_id: &str) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let available = corpus.len().saturating_sub(excluded);
    if k > available {
        log::warn!("query {query_id}: requested {k} negatives but only {available} candidates exist");
    }
    Ok(())
}

/// The `k` best-scoring documents for the pair's query, excluding the
/// positive. Descending score, ties by ascending doc_id.
pub fn mine_bm25(
    index: &Bm25Index,
    corpus: &PassageCorpus,
    pair: &QueryPositivePair,
    k: usize,
) -> Result<HardNegativeSet> {
    if index.num_docs() != corpus.len() {
        return Err(Error::InvalidInput("index was built from a different corpus".into()));
    }
    let excluded = excluded_positions(corpus, pair);
    check_k(k, corpus, excluded.len(), &pair.query_id)?;
    let scores = index.score_all(&tokenize(&pair.query));
    let ids: Vec<&str> = index.doc_ids.iter().map(String::as_str).collect();
    let top = ranking::top_k(&scores, &ids, k, |i| excluded.binary_search(&i).is_ok());
    Ok(HardNegativeSet {
        query_id: pair.query_id.clone(),
        source: SourceTag::Bm25,
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

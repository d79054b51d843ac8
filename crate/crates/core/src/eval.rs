//! nDCG@k over TREC-style runs and qrels, and run generation from the
//! crate's retrievers.
//!
//! Gain is linear in the relevance grade and the discount is `log2(i + 1)`
//! for 1-based rank `i`, as in trec_eval's `ndcg_cut`. The exponential
//! variant (`2^rel - 1`) is available through [`Gain::Exponential`].

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Index;
use crate::datamodel::PassageCorpus;
use crate::embed::{similarities, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::ranking::{self, by_score_then_id};
use crate::tokenizer::tokenize;

/// Relevance judgments: query_id → doc_id → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    fn grades(&self, query_id: &str) -> impl Iterator<Item = u32> + '_ {
        self.judgments.get(query_id).into_iter().flat_map(|m| m.values().copied())
    }

    /// Reads `query_id 0 doc_id grade` lines. Three-column BEIR TSV
    /// (`query-id corpus-id score`, optional header) is accepted as well.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut qrels = Qrels::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let cols: Vec<&str> = line.split_whitespace().collect();
            let (q, d, g) = match cols.as_slice() {
                [] => continue,
                [q, _, d, g] => (*q, *d, *g),
                [q, d, g] => (*q, *d, *g),
                _ => return Err(Error::data(path, line_no, "expected `query_id 0 doc_id grade`")),
            };
            match g.parse::<i64>() {
                Ok(grade) if grade >= 0 => qrels.insert(q, d, grade as u32),
                // trec_eval treats negative grades as non-relevant
                Ok(_) => qrels.insert(q, d, 0),
                Err(_) if line_no == 1 => continue,
                Err(_) => return Err(Error::data(path, line_no, format!("bad grade {g:?}"))),
            }
        }
        Ok(qrels)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                out.push_str(&format!("{q} 0 {d} {g}\n"));
            }
        }
        crate::jsonl::write_file(path, &out).map(|_| ())
    }
}

/// Ranked retrieval output. Each query's list is kept sorted by
/// descending score, ties by ascending doc_id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRanking {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunRanking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, mut docs: Vec<(String, f64)>) -> Result<()> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        if let Some((dup, _)) = docs.iter().find(|(d, _)| !seen.insert(d.as_str())) {
            return Err(Error::InvalidInput(format!("query {query_id}: duplicate doc_id {dup} in run")));
        }
        if docs.iter().any(|(_, s)| s.is_nan()) {
            return Err(Error::InvalidInput(format!("query {query_id}: NaN score in run")));
        }
        docs.sort_by(|a, b| by_score_then_id((a.1, &a.0), (b.1, &b.0)));
        self.rankings.insert(query_id, docs);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    /// Reads `query_id Q0 doc_id rank score tag` lines. The rank column is
    /// ignored; ordering comes from the scores.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lists: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            let [q, _, d, _, s, ..] = cols.as_slice() else {
                return Err(Error::data(path, i + 1, "expected `query_id Q0 doc_id rank score tag`"));
            };
            let score: f64 = s
                .parse()
                .map_err(|_| Error::data(path, i + 1, format!("bad score {s:?}")))?;
            lists.entry(q.to_string()).or_default().push((d.to_string(), score));
        }
        let mut run = RunRanking::new();
        for (q, docs) in lists {
            run.insert(q, docs).map_err(|e| Error::data(path, 0, e.to_string()))?;
        }
        Ok(run)
    }

    pub fn to_trec(&self, tag: &str) -> String {
        let mut out = String::new();
        for (q, docs) in &self.rankings {
            for (rank, (d, s)) in docs.iter().enumerate() {
                out.push_str(&format!("{q} Q0 {d} {} {s} {tag}\n", rank + 1));
            }
        }
        out
    }

    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut run = RunRanking::new();
        for (q, docs) in &self.rankings {
            run.insert(q.clone(), docs.iter().map(|(d, s)| (d.clone(), f(*s))).collect())?;
        }
        Ok(run)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    #[default]
    Linear,
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Judged queries with no positive grade; not evaluated.
    pub skipped: Vec<String>,
}

fn discount(rank: usize) -> f64 {
    (rank as f64 + 1.0).log2()
}

pub fn ndcg_at_k(run: &RunRanking, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    ndcg_at_k_with(run, qrels, k, Gain::Linear)
}

/// Every judged query with at least one positive grade is evaluated; a
/// query absent from the run scores 0.
pub fn ndcg_at_k_with(run: &RunRanking, qrels: &Qrels, k: usize, gain: Gain) -> Result<MetricResult> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    for q in qrels.queries() {
        let mut ideal: Vec<u32> = qrels.grades(q).filter(|&g| g > 0).collect();
        if ideal.is_empty() {
            skipped.push(q.to_string());
            continue;
        }
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain.apply(g) / discount(i + 1))
            .sum();
        let dcg: f64 = run
            .get(q)
            .unwrap_or(&[])
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, (d, _))| gain.apply(qrels.grade(q, d)) / discount(i + 1))
            .sum();
        per_query.insert(q.to_string(), (dcg / idcg).clamp(0.0, 1.0));
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    Ok(MetricResult {
        k,
        per_query,
        mean,
        skipped,
    })
}

/// Scoring back end for [`make_run`].
pub enum Retriever<'a> {
    Bm25(&'a Bm25Index),
    Dense {
        provider: &'a dyn EmbeddingProvider,
        vectors: &'a [EmbeddingVector],
    },
}

/// Top-`depth` documents per query. Ties go to the smaller doc_id.
pub async fn make_run(
    retriever: &Retriever<'_>,
    queries: &[(String, String)],
    corpus: &PassageCorpus,
    depth: usize,
) -> Result<RunRanking> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot build a run over an empty corpus".into()));
    }
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    let ids: Vec<&str> = corpus.passages().iter().map(|p| p.doc_id.as_str()).collect();
    let scores: Vec<Vec<f64>> = match retriever {
        Retriever::Bm25(index) => {
            if index.num_docs() != corpus.len() {
                return Err(Error::InvalidInput("index was built from a different corpus".into()));
            }
            queries.iter().map(|(_, q)| index.score_all(&tokenize(q))).collect()
        }
        Retriever::Dense { provider, vectors } => {
            if vectors.len() != corpus.len() {
                return Err(Error::InvalidInput("vectors are not aligned with the corpus".into()));
            }
            let texts: Vec<String> = queries.iter().map(|(_, q)| q.clone()).collect();
            let qv = provider.embed(&texts).await?;
            qv.iter()
                .map(|q| {
                    if q.is_zero() {
                        Ok(vec![0.0; vectors.len()])
                    } else {
                        similarities(q, vectors)
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    let mut run = RunRanking::new();
    for ((qid, _), s) in queries.iter().zip(scores) {
        let top = ranking::top_k(&s, &ids, depth, |_| false);
        run.insert(qid.clone(), top.into_iter().map(|(i, sc)| (ids[i].to_string(), sc)).collect())?;
    }
    Ok(run)
}

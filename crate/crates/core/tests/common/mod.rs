//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use hardneg::datamodel::{Passage, PassageCorpus, QueryPositivePair};
use hardneg::llm::parse::ParsePassagesError as E;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Bm25Oracle {
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
}

impl Default for Bm25Oracle {
    fn default() -> Self {
        Bm25Oracle { k1: 1.5, b: 0.75, epsilon: 0.25 }
    }
}

impl Bm25Oracle {
    /// Okapi BM25 of `query` against every document, by direct counting.
    /// Documents and query are whitespace-split lowercase words.
    pub fn scores(&self, docs: &[&str], query: &str) -> Vec<f64> {
        let docs: Vec<Vec<&str>> = docs.iter().map(|d| d.split_whitespace().collect()).collect();
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &docs {
            let mut seen: Vec<&str> = d.clone();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut idf: BTreeMap<&str, f64> = df
            .iter()
            .map(|(&t, &m)| (t, ((n - m as f64 + 0.5) / (m as f64 + 0.5) + 1.0).ln()))
            .collect();
        let mut pos: Vec<f64> = idf.values().copied().filter(|v| *v > 0.0).collect();
        pos.sort_by(f64::total_cmp);
        let floor = if pos.is_empty() { 0.0 } else { self.epsilon * pos.iter().sum::<f64>() / pos.len() as f64 };
        for v in idf.values_mut() {
            if *v < 0.0 {
                *v = floor;
            }
        }
        docs.iter()
            .map(|d| {
                let dl = d.len() as f64;
                let mut total = 0.0;
                for q in query.split_whitespace() {
                    let f = d.iter().filter(|t| **t == q).count() as f64;
                    if f > 0.0 {
                        let w = idf[q];
                        total += w * (f * (self.k1 + 1.0)) / (f + self.k1 * (1.0 - self.b + self.b * dl / avgdl));
                    }
                }
                total
            })
            .collect()
    }
}

/// Full sort of `(id, score)` by descending score, then ascending id.
pub fn full_sort(mut items: Vec<(String, f64)>) -> Vec<(String, f64)> {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items
}

/// Brute-force negatives: every corpus document except the positive
/// (by id and by text), fully sorted, first `k`.
pub fn brute_force_top_k(corpus: &PassageCorpus, pair: &QueryPositivePair, scores: &[f64], k: usize) -> Vec<(String, f64)> {
    let items: Vec<(String, f64)> = corpus
        .passages()
        .iter()
        .zip(scores)
        .filter(|(p, _)| p.doc_id != pair.positive.doc_id && p.text.trim() != pair.positive.text.trim())
        .map(|(p, s)| (p.doc_id.clone(), *s))
        .collect();
    full_sort(items).into_iter().take(k).collect()
}

pub fn cosine(u: &[f32], v: &[f32]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    let nu: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu * nv)).clamp(-1.0, 1.0)
    }
}

/// Hashed bag of words, reimplemented: FNV-1a 64 of each lowercase
/// alphanumeric token, slot `h % dim`, sign from the top bit.
pub fn hashed_bow(text: &str, dim: usize) -> Vec<f32> {
    let mut counts = vec![0i64; dim];
    for tok in hardneg::tokenizer::tokenize(text).iter() {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tok.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let slot = (h % dim as u64) as usize;
        counts[slot] += if h >> 63 == 1 { -1 } else { 1 };
    }
    let norm = counts.iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    counts.iter().map(|c| (*c as f64 / norm) as f32).collect()
}

/// nDCG@k with linear gain, straight from the definition.
pub fn ndcg_oracle(ranked: &[&str], grades: &HashMap<&str, u32>, k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| *grades.get(d).unwrap_or(&0) as f64 / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().filter(|g| *g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| *g as f64 / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Random corpus with skewed word frequencies, so ties and shared terms
/// are common, plus one pair whose positive is a corpus document.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize, max_vocab: usize) -> (PassageCorpus, QueryPositivePair) {
    let vocab = 2 + below(rng, max_vocab - 1);
    let n_docs = 2 + below(rng, max_docs - 1);
    let word = |rng: &mut ChaCha8Rng| {
        // squaring a uniform draw favours low indices
        let u = below(rng, vocab * vocab);
        format!("w{}", (u as f64).sqrt() as usize)
    };
    let passages: Vec<Passage> = (0..n_docs)
        .map(|i| {
            let len = 1 + below(rng, 12);
            let text: Vec<String> = (0..len).map(|_| word(rng)).collect();
            Passage::new(format!("d{i:04}"), "", text.join(" "))
        })
        .collect();
    let corpus = PassageCorpus::from_passages(passages).expect("distinct ids");
    let positive = corpus.passages()[below(rng, corpus.len())].clone();
    let qlen = 1 + below(rng, 5);
    let query: Vec<String> = (0..qlen).map(|_| word(rng)).collect();
    let pair = QueryPositivePair {
        query_id: "q".into(),
        query: query.join(" "),
        positive,
        alternates: vec![],
    };
    (corpus, pair)
}

/// The bundled sample, also when compiled into the acceptance package.
pub fn sample_dir() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let core = if here.join("data/sample").is_dir() { here.to_path_buf() } else { here.join("../core") };
    core.join("data/sample")
}

/// Pipeline config over the bundled sample with every source enabled.
pub fn sample_config(out: &Path, endpoint: &str) -> hardneg::config::PipelineConfig {
    let sample = sample_dir();
    let mut c = hardneg::config::PipelineConfig::minimal(sample.join("pairs.jsonl"), out);
    c.paths.corpus = Some(sample.join("extra_corpus.jsonl"));
    c.bm25.k = 3;
    c.embed.k = 3;
    c.llm.endpoint = Some(endpoint.to_string());
    c.llm.generation.initial_backoff_ms = 1;
    c.eval.qrels = Some(sample.join("qrels.tsv"));
    c
}

/// ingest → mine (bm25, embed) → generate for every LLM label → mix,
/// returning the manifest hash of every exported file.
pub async fn run_pipeline(out: &Path, endpoint: &str, recipes: &[&str]) -> BTreeMap<String, String> {
    use hardneg::pipeline::{MineSource, Pipeline};
    let mut config = sample_config(out, endpoint);
    config.recipes = recipes.iter().map(|s| s.to_string()).collect();
    let labels = config.llm.labels.clone();
    let p = Pipeline::new(config, false).unwrap();
    p.ingest(Some(7)).unwrap();
    p.mine(MineSource::Bm25, None).await.unwrap();
    p.mine(MineSource::Embed, None).await.unwrap();
    for label in &labels {
        p.generate(Some(label), None).await.unwrap();
    }
    p.mix(None).unwrap();
    manifest_hashes(out)
}

pub fn manifest_hashes(out: &Path) -> BTreeMap<String, String> {
    let mut hashes = BTreeMap::new();
    for dir in ["negatives", "mix"] {
        let Ok(entries) = std::fs::read_dir(out.join(dir)) else { continue };
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if name.ends_with(".manifest.json") {
                let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(e.path()).unwrap()).unwrap();
                hashes.insert(format!("{dir}/{name}"), v["sha256"].as_str().unwrap_or("").to_string());
            }
        }
    }
    hashes
}

pub fn five(sep: &str) -> String {
    ["A", "B", "C", "D", "E"]
        .iter()
        .enumerate()
        .map(|(i, t)| format!("Passage {}: {t}", i + 1))
        .collect::<Vec<_>>()
        .join(sep)
}

/// Malformed model outputs and the error each must produce.
pub fn malformed_outputs() -> Vec<(&'static str, String, E)> {
    vec![
        ("empty", String::new(), E::Missing(1)),
        ("prose only", "I'm sorry, I can't do that.".into(), E::Missing(1)),
        ("gap", "Passage 1: A\nPassage 3: C".into(), E::Missing(2)),
        ("four only", "Passage 1: A\nPassage 2: B\nPassage 3: C\nPassage 4: D".into(), E::Missing(5)),
        ("starts at two", "Passage 2: B\nPassage 3: C".into(), E::Missing(1)),
        ("repeated first", "Passage 1: A\nPassage 1: A again\nPassage 2: B".into(), E::Duplicate(1)),
        ("repeated last", format!("{}\nPassage 5: again", five("\n")), E::Duplicate(5)),
        ("swapped", "Passage 1: A\nPassage 3: C\nPassage 2: B\nPassage 4: D\nPassage 5: E".into(), E::OutOfOrder(2)),
        ("reversed", "Passage 5: E\nPassage 4: D\nPassage 3: C\nPassage 2: B\nPassage 1: A".into(), E::OutOfOrder(1)),
        ("sixth", format!("{}\nPassage 6: F", five("\n")), E::Unexpected(6)),
        ("zero", "Passage 0: Z\nPassage 1: A".into(), E::Unexpected(0)),
        ("huge number", "Passage 999999: x".into(), E::Unexpected(999999)),
        ("empty body", "Passage 1: A\nPassage 2:\nPassage 3: C\nPassage 4: D\nPassage 5: E".into(), E::Empty(2)),
        ("empty last", "Passage 1: A\nPassage 2: B\nPassage 3: C\nPassage 4: D\nPassage 5:   ".into(), E::Empty(5)),
        ("bold only body", "Passage 1: A\nPassage 2: B\nPassage 3: C\nPassage 4: D\nPassage 5: **".into(), E::Empty(5)),
        ("no colon", "Passage 1 A\nPassage 2 B\nPassage 3 C\nPassage 4 D\nPassage 5 E".into(), E::Missing(1)),
        ("numbered list", "1. A\n2. B\n3. C\n4. D\n5. E".into(), E::Missing(1)),
        ("glued word", "Passage 1: A\nSubpassage 2: B".into(), E::Missing(2)),
        ("only think block", "<think>Passage 1: A\nPassage 2: B</think>".into(), E::Missing(1)),
        ("truncated", "Passage 1: A\nPassage 2: B\nPassage 3: C\nPass".into(), E::Missing(4)),
    ]
}

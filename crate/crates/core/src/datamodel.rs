//! Core record types, pair ingestion, corpus construction and seeded
//! subsampling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl;

/// Trims and collapses internal whitespace runs to a single space. Case is
/// preserved. Two passages are "the same" when their normalized texts match.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn text_key(text: &str) -> [u8; 32] {
    Sha256::digest(normalize_text(text).as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    #[serde(rename = "docid", alias = "_id", alias = "doc_id")]
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Passage {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Passage {
            doc_id: doc_id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    pub fn normalized_text(&self) -> String {
        normalize_text(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPositivePair {
    pub query_id: String,
    pub query: String,
    pub positive: Passage,
    /// Additional positives from the input record. Carried along, never mined.
    pub alternates: Vec<Passage>,
}

/// On-disk layout of one input pair, mirroring the Tevatron msmarco-passage
/// records. Unknown fields (e.g. `negative_passages`) are ignored.
#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    query_id: String,
    query: String,
    positive_passages: Vec<Passage>,
}

#[derive(Debug, Default)]
pub struct IngestedPairs {
    pub pairs: Vec<QueryPositivePair>,
    pub warnings: Vec<String>,
}

/// Reads an input pair file, one pair per record in file order.
pub fn ingest_pairs(path: &Path) -> Result<IngestedPairs> {
    let mut out = IngestedPairs::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    jsonl::read_each(path, |record: PairRecord, line| {
        if record.query.trim().is_empty() {
            return Err(Error::data(path, line, format!("empty query at line {line}")));
        }
        let mut positives = record.positive_passages.into_iter();
        let positive = positives
            .next()
            .ok_or_else(|| Error::data(path, line, format!("no positive passage at line {line}")))?;
        let alternates: Vec<Passage> = positives.collect();
        for p in std::iter::once(&positive).chain(&alternates) {
            if p.text.trim().is_empty() {
                return Err(Error::data(
                    path,
                    line,
                    format!("empty positive text for doc {} at line {line}", p.doc_id),
                ));
            }
        }
        if let Some(first) = seen.insert(record.query_id.clone(), line) {
            let msg = format!(
                "query_id {} at line {line} already seen at line {first}; keeping both",
                record.query_id
            );
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        out.pairs.push(QueryPositivePair {
            query_id: record.query_id,
            query: record.query,
            positive,
            alternates,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Writes pairs back in the input pair format (positive first, then alternates).
pub fn write_pairs(path: &Path, pairs: &[QueryPositivePair]) -> Result<String> {
    jsonl::write_records(
        path,
        pairs.iter().map(|p| PairRecord {
            query_id: p.query_id.clone(),
            query: p.query.clone(),
            positive_passages: std::iter::once(p.positive.clone())
                .chain(p.alternates.iter().cloned())
                .collect(),
        }),
    )
}

/// Deduplicated passage collection with lookup by id and by normalized text.
#[derive(Debug, Clone, Default)]
pub struct PassageCorpus {
    passages: Vec<Passage>,
    index_by_id: HashMap<String, usize>,
    index_by_text_hash: HashMap<[u8; 32], String>,
    aliases: BTreeMap<String, String>,
}

impl PassageCorpus {
    /// Builds a corpus from passages in order. First occurrence wins when
    /// two passages share normalized text; the later id becomes an alias.
    pub fn from_passages(passages: impl IntoIterator<Item = Passage>) -> Result<Self> {
        let mut corpus = PassageCorpus::default();
        for p in passages {
            corpus.insert(p)?;
        }
        Ok(corpus)
    }

    fn insert(&mut self, passage: Passage) -> Result<()> {
        if passage.text.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "passage {} has empty text",
                passage.doc_id
            )));
        }
        let key = text_key(&passage.text);
        if let Some(&pos) = self.index_by_id.get(&passage.doc_id) {
            if text_key(&self.passages[pos].text) != key {
                return Err(Error::InvalidInput(format!(
                    "doc_id {} appears with two different texts",
                    passage.doc_id
                )));
            }
            return Ok(());
        }
        if let Some(canonical) = self.aliases.get(&passage.doc_id) {
            let canonical_pos = self.index_by_id[canonical];
            if text_key(&self.passages[canonical_pos].text) != key {
                return Err(Error::InvalidInput(format!(
                    "doc_id {} appears with two different texts",
                    passage.doc_id
                )));
            }
            return Ok(());
        }
        if let Some(canonical) = self.index_by_text_hash.get(&key) {
            self.aliases.insert(passage.doc_id, canonical.clone());
            return Ok(());
        }
        self.index_by_text_hash.insert(key, passage.doc_id.clone());
        self.index_by_id.insert(passage.doc_id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    /// Alias doc_id → canonical doc_id for texts dropped as duplicates.
    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }

    /// Position of `doc_id` (or of the passage it aliases).
    pub fn position(&self, doc_id: &str) -> Option<usize> {
        let id = self.aliases.get(doc_id).map(String::as_str).unwrap_or(doc_id);
        self.index_by_id.get(id).copied()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Passage> {
        self.position(doc_id).map(|i| &self.passages[i])
    }

    pub fn position_by_text(&self, text: &str) -> Option<usize> {
        self.index_by_text_hash
            .get(&text_key(text))
            .and_then(|id| self.index_by_id.get(id).copied())
    }

    /// Corpus position of the pair's positive, by id first and then by text.
    pub fn positive_position(&self, pair: &QueryPositivePair) -> Option<usize> {
        self.position(&pair.positive.doc_id)
            .or_else(|| self.position_by_text(&pair.positive.text))
    }
}

/// Corpus of every distinct passage among the pairs' positives (and
/// alternates), followed by `extra` distractors.
pub fn build_corpus(pairs: &[QueryPositivePair], extra: &[Passage]) -> Result<PassageCorpus> {
    let positives = pairs
        .iter()
        .flat_map(|p| std::iter::once(&p.positive).chain(&p.alternates));
    PassageCorpus::from_passages(positives.chain(extra).cloned())
}

pub fn write_corpus(path: &Path, corpus: &PassageCorpus) -> Result<String> {
    jsonl::write_records(path, corpus.passages())
}

/// Reads a corpus export (also accepts BEIR `corpus.jsonl`, keyed by `_id`).
pub fn read_passages(path: &Path) -> Result<Vec<Passage>> {
    jsonl::read_all(path)
}

/// Derives a purpose-specific seed from the pipeline seed: the first eight
/// bytes (little endian) of sha256(seed as 8 LE bytes ‖ label).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Uniform integer in `0..bound` by rejection sampling on raw u64 output.
fn uniform_below(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// Uniform sample of `n` passages without replacement.
///
/// Passages are sorted by doc_id, then a partial Fisher–Yates shuffle driven
/// by ChaCha8 seeded with `seed` (`seed_from_u64`) fills positions `0..n`;
/// step `i` swaps `i` with `i + uniform_below(len - i)`. The sample keeps the
/// shuffled order.
pub fn sample_corpus(corpus: &PassageCorpus, n: usize, seed: u64) -> Result<PassageCorpus> {
    if n > corpus.len() {
        return Err(Error::InvalidInput(format!(
            "cannot sample {n} passages from a corpus of {}",
            corpus.len()
        )));
    }
    let mut order: Vec<&Passage> = corpus.passages.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = order.len();
    for i in 0..n {
        let j = i + uniform_below(&mut rng, (len - i) as u64) as usize;
        order.swap(i, j);
    }
    let mut sample = PassageCorpus::from_passages(order[..n].iter().map(|p| (*p).clone()))?;
    for (alias, canonical) in &corpus.aliases {
        if sample.index_by_id.contains_key(canonical) {
            sample.aliases.insert(alias.clone(), canonical.clone());
        }
    }
    Ok(sample)
}

/// Provenance of a negative set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceTag {
    Bm25,
    Embed(String),
    Llm(String),
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTag::Bm25 => f.write_str("bm25"),
            SourceTag::Embed(m) => write!(f, "embed:{m}"),
            SourceTag::Llm(m) => write!(f, "llm:{m}"),
        }
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "bm25" => Ok(SourceTag::Bm25),
            Some(("embed", m)) if !m.is_empty() => Ok(SourceTag::Embed(m.to_string())),
            Some(("llm", m)) if !m.is_empty() => Ok(SourceTag::Llm(m.to_string())),
            _ => Err(Error::InvalidInput(format!("unknown source tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Negative {
    pub passage: Passage,
    /// Retrieval score for mined negatives; absent for generated ones.
    pub score: Option<f64>,
    /// Constraint-violation labels (generated negatives only).
    pub flags: Vec<String>,
}

/// Ordered negatives for one query from a single source.
#[derive(Debug, Clone, PartialEq)]
pub struct HardNegativeSet {
    pub query_id: String,
    pub source: SourceTag,
    pub negatives: Vec<Negative>,
    /// Generation attempts, for LLM sources.
    pub attempts: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NegativeRecord {
    query_id: String,
    source: String,
    negatives: Vec<NegativeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attempts: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NegativeEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    docid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flags: Option<Vec<String>>,
}

impl From<&HardNegativeSet> for NegativeRecord {
    fn from(set: &HardNegativeSet) -> Self {
        let generated = matches!(set.source, SourceTag::Llm(_));
        NegativeRecord {
            query_id: set.query_id.clone(),
            source: set.source.to_string(),
            negatives: set
                .negatives
                .iter()
                .map(|n| {
                    if generated {
                        NegativeEntry {
                            docid: None,
                            score: None,
                            text: Some(n.passage.text.clone()),
                            flags: Some(n.flags.clone()),
                        }
                    } else {
                        NegativeEntry {
                            docid: Some(n.passage.doc_id.clone()),
                            score: n.score,
                            text: None,
                            flags: None,
                        }
                    }
                })
                .collect(),
            attempts: set.attempts,
        }
    }
}

/// Writes negative sets: mined sources as `{"docid","score"}` entries,
/// generated sources as `{"text","flags"}` entries plus `attempts`.
pub fn write_negative_sets(path: &Path, sets: &[HardNegativeSet]) -> Result<String> {
    jsonl::write_records(path, sets.iter().map(NegativeRecord::from))
}

/// Reads a negatives file. Mined entries are resolved against `corpus`.
pub fn read_negative_sets(path: &Path, corpus: &PassageCorpus) -> Result<Vec<HardNegativeSet>> {
    let mut out = Vec::new();
    jsonl::read_each(path, |record: NegativeRecord, line| {
        let source: SourceTag = record
            .source
            .parse()
            .map_err(|e: Error| Error::data(path, line, e.to_string()))?;
        let mut negatives = Vec::with_capacity(record.negatives.len());
        for (i, entry) in record.negatives.into_iter().enumerate() {
            let passage = match (entry.docid, entry.text) {
                (Some(id), _) => corpus.get(&id).cloned().ok_or_else(|| {
                    Error::data(path, line, format!("unknown docid {id} in negatives"))
                })?,
                (None, Some(text)) => {
                    Passage::new(format!("{}#{}#{}", record.query_id, source, i + 1), "", text)
                }
                (None, None) => {
                    return Err(Error::data(path, line, "negative has neither docid nor text"))
                }
            };
            negatives.push(Negative {
                passage,
                score: entry.score,
                flags: entry.flags.unwrap_or_default(),
            });
        }
        out.push(HardNegativeSet {
            query_id: record.query_id,
            source,
            negatives,
            attempts: record.attempts,
        });
        Ok(())
    })?;
    Ok(out)
}

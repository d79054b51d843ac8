//! Training-set recipes: which negative sources to combine, and how.
//!
//! A recipe names source selectors (`bm25`, `ce`, `llm:<label>`). In rows
//! mode every (pair, source) becomes its own training row, which is plain
//! dataset concatenation. Merged mode folds all sources into one row per
//! pair, dropping exact-text repeats.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{normalize_text, HardNegativeSet, QueryPositivePair};
use crate::error::{Error, Result};
use crate::jsonl;

pub const SELECTOR_BM25: &str = "bm25";
pub const SELECTOR_CE: &str = "ce";

/// LLM labels used when none are configured.
pub const DEFAULT_LLM_LABELS: [&str; 4] = ["qwen3-4b", "llama3-8b", "phi4-14b", "qwen3-30b"];

pub fn llm_selector(label: &str) -> String {
    format!("llm:{label}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    #[default]
    Rows,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub sources: Vec<String>,
    #[serde(default)]
    pub mode: MixMode,
}

impl Recipe {
    pub fn rows(name: impl Into<String>, sources: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Recipe {
            name: name.into(),
            sources: sources.into_iter().map(Into::into).collect(),
            mode: MixMode::Rows,
        }
    }

    pub fn is_llm_source(selector: &str) -> bool {
        selector.starts_with("llm:")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub query: String,
    #[serde(rename = "pos")]
    pub positive: String,
    #[serde(rename = "negs")]
    pub negatives: Vec<String>,
    #[serde(rename = "tags")]
    pub source_tags: Vec<String>,
}

/// Negative sets keyed by selector, then by query_id.
#[derive(Debug, Clone, Default)]
pub struct NegativeSources {
    by_selector: BTreeMap<String, HashMap<String, HardNegativeSet>>,
}

impl NegativeSources {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `sets` under `selector`. A later set for the same query
    /// replaces the earlier one.
    pub fn insert(&mut self, selector: impl Into<String>, sets: impl IntoIterator<Item = HardNegativeSet>) {
        let entry = self.by_selector.entry(selector.into()).or_default();
        for set in sets {
            entry.insert(set.query_id.clone(), set);
        }
    }

    pub fn selectors(&self) -> impl Iterator<Item = &str> {
        self.by_selector.keys().map(String::as_str)
    }

    fn get(&self, selector: &str, query_id: &str) -> Option<&HardNegativeSet> {
        self.by_selector.get(selector).and_then(|m| m.get(query_id))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Composition {
    pub examples: Vec<TrainingExample>,
    /// query_ids dropped because a source had no negatives for them.
    pub skipped: Vec<String>,
}

fn filtered(set: &HardNegativeSet, positive: &str) -> (Vec<String>, Vec<String>) {
    let tag = set.source.to_string();
    set.negatives
        .iter()
        .filter(|n| normalize_text(&n.passage.text) != positive)
        .map(|n| (n.passage.text.clone(), tag.clone()))
        .unzip()
}

/// Builds training rows for `recipe`. Output order is pair order, then
/// recipe source order. A pair missing any of the recipe's sources is left
/// out of the recipe entirely. Negatives equal to the positive are removed.
pub fn compose(
    recipe: &Recipe,
    pairs: &[QueryPositivePair],
    sources: &NegativeSources,
) -> Result<Composition> {
    if recipe.sources.is_empty() {
        return Err(Error::InvalidInput(format!("recipe {} has no sources", recipe.name)));
    }
    if let Some(unknown) = recipe.sources.iter().find(|s| !sources.by_selector.contains_key(*s)) {
        return Err(Error::InvalidInput(format!(
            "recipe {}: unknown source selector {unknown}",
            recipe.name
        )));
    }
    let mut out = Composition::default();
    for pair in pairs {
        let sets: Option<Vec<&HardNegativeSet>> =
            recipe.sources.iter().map(|s| sources.get(s, &pair.query_id)).collect();
        let Some(sets) = sets else {
            log::warn!("recipe {}: skipping query {} (missing source)", recipe.name, pair.query_id);
            out.skipped.push(pair.query_id.clone());
            continue;
        };
        let positive = normalize_text(&pair.positive.text);
        let make = |negatives: Vec<String>, source_tags: Vec<String>| TrainingExample {
            query: pair.query.clone(),
            positive: pair.positive.text.clone(),
            negatives,
            source_tags,
        };
        match recipe.mode {
            MixMode::Rows => {
                for set in sets {
                    let (negs, tags) = filtered(set, &positive);
                    if negs.is_empty() {
                        log::warn!("recipe {}: no usable negatives for {} from {}", recipe.name, pair.query_id, set.source);
                        continue;
                    }
                    out.examples.push(make(negs, tags));
                }
            }
            MixMode::Merged => {
                let mut seen = HashSet::new();
                let (mut negs, mut tags) = (Vec::new(), Vec::new());
                for set in sets {
                    let (n, t) = filtered(set, &positive);
                    for (text, tag) in n.into_iter().zip(t) {
                        if seen.insert(normalize_text(&text)) {
                            negs.push(text);
                            tags.push(tag);
                        }
                    }
                }
                if negs.is_empty() {
                    log::warn!("recipe {}: no usable negatives for {}", recipe.name, pair.query_id);
                    continue;
                }
                out.examples.push(make(negs, tags));
            }
        }
    }
    Ok(out)
}

/// The 22 training configurations of the published comparison table, in
/// table order, over the four given LLM labels.
pub fn recipe_book_from_paper(llm_labels: &[String]) -> Vec<Recipe> {
    let llms: Vec<String> = llm_labels.iter().map(|l| llm_selector(l)).collect();
    let with = |extra: &[&str]| -> Vec<String> {
        llms.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect()
    };
    let mut book = vec![
        Recipe::rows("bm25", [SELECTOR_BM25]),
        Recipe::rows("ce", [SELECTOR_CE]),
        Recipe::rows("all-llms", with(&[])),
        Recipe::rows("all-llms+bm25", with(&[SELECTOR_BM25])),
        Recipe::rows("all-llms+ce", with(&[SELECTOR_CE])),
        Recipe::rows("all-llms+bm25+ce", with(&[SELECTOR_BM25, SELECTOR_CE])),
    ];
    let combos: [(&str, &[&str]); 4] = [
        ("bm25+ce+", &[SELECTOR_BM25, SELECTOR_CE]),
        ("bm25+", &[SELECTOR_BM25]),
        ("ce+", &[SELECTOR_CE]),
        ("", &[]),
    ];
    for (prefix, mined) in combos {
        for (label, llm) in llm_labels.iter().zip(&llms) {
            let sources: Vec<String> = mined
                .iter()
                .map(|s| s.to_string())
                .chain(std::iter::once(llm.clone()))
                .collect();
            book.push(Recipe::rows(format!("{prefix}{label}"), sources));
        }
    }
    book
}

pub fn default_llm_labels() -> Vec<String> {
    DEFAULT_LLM_LABELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub recipe: String,
    pub examples: usize,
    pub negatives: usize,
    /// Negatives per source tag.
    pub sources: BTreeMap<String, usize>,
    pub sha256: String,
}

/// Path of the manifest written next to `triplets`.
pub fn manifest_path(triplets: &Path) -> PathBuf {
    let stem = triplets.file_stem().and_then(|s| s.to_str()).unwrap_or("triplets");
    triplets.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes the triplet file and its manifest. Identical input gives
/// byte-identical output.
pub fn export(examples: &[TrainingExample], recipe: &str, path: &Path) -> Result<Manifest> {
    if examples.is_empty() {
        return Err(Error::InvalidInput(format!("recipe {recipe} produced no examples")));
    }
    let sha256 = jsonl::write_records(path, examples)?;
    let mut sources = BTreeMap::new();
    for tag in examples.iter().flat_map(|e| &e.source_tags) {
        *sources.entry(tag.clone()).or_insert(0) += 1;
    }
    let manifest = Manifest {
        recipe: recipe.to_string(),
        examples: examples.len(),
        negatives: examples.iter().map(|e| e.negatives.len()).sum(),
        sources,
        sha256,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    jsonl::write_file(&manifest_path(path), &text)?;
    Ok(manifest)
}

pub fn read_triplets(path: &Path) -> Result<Vec<TrainingExample>> {
    jsonl::read_all(path)
}

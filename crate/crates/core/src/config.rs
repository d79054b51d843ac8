//! Pipeline configuration: one JSON file, with command-line overrides
//! applied on top by the front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Params, DEFAULT_K};
use crate::error::{Error, Result};
use crate::eval::Gain;
use crate::http::RetryPolicy;
use crate::llm::GenerationConfig;
use crate::mixer::{default_llm_labels, MixMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Input pair file (query_id, query, positive_passages).
    pub pairs: PathBuf,
    /// Optional extra passages merged into the corpus.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
    pub k: usize,
}

impl Default for Bm25Config {
    fn default() -> Self {
        let p = Bm25Params::default();
        Bm25Config {
            k1: p.k1,
            b: p.b,
            epsilon: p.epsilon,
            k: DEFAULT_K,
        }
    }
}

impl Bm25Config {
    pub fn params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// Remote embedding service; the offline hashing provider is used when absent.
    pub endpoint: Option<String>,
    pub model_id: String,
    pub dimension: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub k: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            endpoint: None,
            model_id: "msmarco-MiniLM-L6-v3".into(),
            dimension: 384,
            batch_size: 64,
            max_in_flight: 4,
            k: DEFAULT_K,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    /// Requests in flight at once.
    pub parallelism: usize,
    pub requests_per_second: Option<f64>,
    /// Model ids whose negatives the LLM recipes combine.
    pub labels: Vec<String>,
    #[serde(flatten)]
    pub generation: GenerationConfig,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: None,
            parallelism: 4,
            requests_per_second: None,
            labels: default_llm_labels(),
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Bm25,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub qrels: Option<PathBuf>,
    /// Existing TREC run to score. When absent a run is produced from
    /// `queries` over `corpus` with `retriever`.
    pub run: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub retriever: RetrieverKind,
    pub depth: usize,
    pub k: usize,
    pub gain: Gain,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            qrels: None,
            run: None,
            queries: None,
            corpus: None,
            retriever: RetrieverKind::Bm25,
            depth: 100,
            k: 10,
            gain: Gain::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub sample: Option<SampleConfig>,
    #[serde(default)]
    pub bm25: Bm25Config,
    #[serde(default)]
    pub embed: EmbedConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    /// Recipe names, or `"paper"` for the full 22-recipe book.
    #[serde(default = "default_recipes")]
    pub recipes: Vec<String>,
    #[serde(default)]
    pub mix_mode: MixMode,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_recipes() -> Vec<String> {
    vec!["paper".into()]
}

impl PipelineConfig {
    pub fn minimal(pairs: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            paths: Paths {
                pairs: pairs.into(),
                corpus: None,
                output_dir: output_dir.into(),
            },
            sample: None,
            bm25: Bm25Config::default(),
            embed: EmbedConfig::default(),
            llm: LlmConfig::default(),
            recipes: default_recipes(),
            mix_mode: MixMode::Rows,
            eval: EvalConfig::default(),
        }
    }

    /// Loads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.pairs);
        fix(&mut self.paths.output_dir);
        for p in [
            &mut self.paths.corpus,
            &mut self.eval.qrels,
            &mut self.eval.run,
            &mut self.eval.queries,
            &mut self.eval.corpus,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Checks values that do not depend on the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.bm25
            .params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.bm25.k == 0 || self.embed.k == 0 {
            return Err(Error::Config("mining k must be at least 1".into()));
        }
        if self.embed.batch_size == 0 || self.embed.max_in_flight == 0 || self.embed.dimension == 0 {
            return Err(Error::Config("embed batch_size, max_in_flight and dimension must be ≥ 1".into()));
        }
        if self.llm.parallelism == 0 {
            return Err(Error::Config("llm parallelism must be ≥ 1".into()));
        }
        if let Some(s) = &self.sample {
            if s.seed.is_none() {
                return Err(Error::Config("sample.seed is required when sampling".into()));
            }
        }
        if self.eval.k == 0 || self.eval.depth == 0 {
            return Err(Error::Config("eval k and depth must be ≥ 1".into()));
        }
        if self.recipes.is_empty() {
            return Err(Error::Config("no recipes configured".into()));
        }
        Ok(())
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

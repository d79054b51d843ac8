//! The six pipeline steps behind the command-line front end.
//!
//! Every step reads its inputs and validates them before writing anything,
//! and in dry-run mode stops after validation and reports what it would do.
//! Output layout under `paths.output_dir`:
//!
//! ```text
//! pairs.jsonl  corpus.jsonl  ingest.manifest.json
//! negatives/{bm25,embed,llm-<model>}.jsonl (+ .manifest.json)
//! generation/llm-<model>.records.jsonl
//! mix/<recipe>.jsonl (+ .manifest.json)
//! eval/run.trec  eval/metrics.json
//! report/report.txt  report/report.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bm25::{build_index, mine_bm25};
use crate::config::{require_file, PipelineConfig, RetrieverKind};
use crate::datamodel::{
    build_corpus, derive_seed, ingest_pairs, read_negative_sets, read_passages, sample_corpus,
    write_corpus, write_negative_sets, write_pairs, HardNegativeSet, PassageCorpus, QueryPositivePair,
};
use crate::embed::{embed_corpus, mine_embed, EmbeddingProvider, EmbeddingVector, HashingProvider, RemoteProvider};
use crate::error::{Error, Result};
use crate::eval::{make_run, ndcg_at_k_with, Qrels, Retriever, RunRanking};
use crate::jsonl;
use crate::llm::{generate_many, GenerationRecord, OpenAiChatClient};
use crate::mixer::{self, compose, export, recipe_book_from_paper, NegativeSources, Recipe, SELECTOR_BM25, SELECTOR_CE};
use crate::report::{
    aggregate_table, compare_aggregated_vs_individual, families, format_3, render_comparisons,
    within_half_milli, CellsFile,
};

/// What a step did (or, in dry-run mode, would do).
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub messages: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl StepOutcome {
    fn say(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::debug!("{msg}");
        self.messages.push(msg);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MineSource {
    Bm25,
    Embed,
}

impl std::str::FromStr for MineSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(MineSource::Bm25),
            "embed" | "ce" => Ok(MineSource::Embed),
            other => Err(Error::Config(format!("unknown mining source {other} (bm25|embed)"))),
        }
    }
}

/// File-name form of a model label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '+') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

pub struct Pipeline {
    config: PipelineConfig,
    dry_run: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct NegativesManifest {
    source: String,
    queries: usize,
    negatives: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failed: Option<usize>,
    sha256: String,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    jsonl::write_file(path, &text)
}

impl Pipeline {
    pub fn new(config: PipelineConfig, dry_run: bool) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config, dry_run })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.config.paths.output_dir.join(rel)
    }

    pub fn pairs_path(&self) -> PathBuf {
        self.out("pairs.jsonl")
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.out("corpus.jsonl")
    }

    pub fn negatives_path(&self, file_stem: &str) -> PathBuf {
        self.out(&format!("negatives/{file_stem}.jsonl"))
    }

    /// Negatives file backing a recipe source selector.
    pub fn selector_path(&self, selector: &str) -> Result<PathBuf> {
        match selector {
            SELECTOR_BM25 => Ok(self.negatives_path("bm25")),
            SELECTOR_CE => Ok(self.negatives_path("embed")),
            s => match s.strip_prefix("llm:") {
                Some(label) if !label.is_empty() => Ok(self.negatives_path(&format!("llm-{}", slug(label)))),
                _ => Err(Error::Config(format!("unknown source selector {s}"))),
            },
        }
    }

    pub fn mix_path(&self, recipe: &str) -> PathBuf {
        self.out(&format!("mix/{}.jsonl", slug(recipe)))
    }

    /// Ingested pairs and corpus, as written by [`Pipeline::ingest`].
    pub fn load_ingested(&self) -> Result<(Vec<QueryPositivePair>, PassageCorpus)> {
        let (pairs_path, corpus_path) = (self.pairs_path(), self.corpus_path());
        for p in [&pairs_path, &corpus_path] {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "{} not found; run ingest first",
                    p.display()
                )));
            }
        }
        let pairs = ingest_pairs(&pairs_path)?.pairs;
        let corpus = PassageCorpus::from_passages(read_passages(&corpus_path)?)?;
        Ok((pairs, corpus))
    }

    /// Reads the input pairs, builds (and optionally samples) the corpus.
    /// With sampling, pairs whose positive was not drawn are dropped.
    pub fn ingest(&self, seed: Option<u64>) -> Result<StepOutcome> {
        let mut outcome = StepOutcome::default();
        let paths = &self.config.paths;
        require_file(&paths.pairs, "pair file")?;
        if let Some(c) = &paths.corpus {
            require_file(c, "corpus file")?;
        }
        let ingested = ingest_pairs(&paths.pairs)?;
        if ingested.pairs.is_empty() {
            return Err(Error::InvalidInput(format!("{} has no pairs", paths.pairs.display())));
        }
        let extra = match &paths.corpus {
            Some(c) => read_passages(c)?,
            None => Vec::new(),
        };
        let mut corpus = build_corpus(&ingested.pairs, &extra)?;
        let mut pairs = ingested.pairs;
        let mut sample_seed = None;
        if let Some(sample) = &self.config.sample {
            let seed = seed
                .or(sample.seed)
                .ok_or_else(|| Error::Config("sampling needs a seed".into()))?;
            let derived = derive_seed(seed, "sample");
            corpus = sample_corpus(&corpus, sample.n, derived)?;
            let before = pairs.len();
            pairs.retain(|p| corpus.positive_position(p).is_some());
            outcome.say(format!(
                "sampled {} passages (seed {seed}); kept {} of {before} pairs",
                corpus.len(),
                pairs.len()
            ));
            if pairs.is_empty() {
                return Err(Error::InvalidInput("no pair kept its positive after sampling".into()));
            }
            sample_seed = Some(seed);
        }
        outcome.say(format!(
            "ingest: {} pairs, {} passages ({} aliases), {} warnings",
            pairs.len(),
            corpus.len(),
            corpus.aliases().len(),
            ingested.warnings.len()
        ));
        if self.dry_run {
            outcome.say(format!("dry run: would write {} and {}", self.pairs_path().display(), self.corpus_path().display()));
            return Ok(outcome);
        }
        let pairs_sha = write_pairs(&self.pairs_path(), &pairs)?;
        let corpus_sha = write_corpus(&self.corpus_path(), &corpus)?;
        let manifest_path = self.out("ingest.manifest.json");
        write_json(
            &manifest_path,
            &json!({
                "pairs": pairs.len(),
                "passages": corpus.len(),
                "aliases": corpus.aliases(),
                "warnings": ingested.warnings,
                "sample_seed": sample_seed,
                "pairs_sha256": pairs_sha,
                "corpus_sha256": corpus_sha,
            }),
        )?;
        outcome.written.extend([self.pairs_path(), self.corpus_path(), manifest_path]);
        Ok(outcome)
    }

    fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let c = &self.config.embed;
        Ok(match &c.endpoint {
            Some(endpoint) => Box::new(RemoteProvider::new(
                endpoint,
                c.model_id.clone(),
                c.dimension,
                Duration::from_secs(c.timeout_secs),
                c.retry,
            )?),
            None => Box::new(HashingProvider::default()),
        })
    }

    fn write_negatives(
        &self,
        outcome: &mut StepOutcome,
        path: &Path,
        source: String,
        sets: &[HardNegativeSet],
        failed: Option<usize>,
    ) -> Result<()> {
        let sha256 = write_negative_sets(path, sets)?;
        let manifest = NegativesManifest {
            source,
            queries: sets.len(),
            negatives: sets.iter().map(|s| s.negatives.len()).sum(),
            failed,
            sha256,
        };
        let mpath = mixer::manifest_path(path);
        write_json(&mpath, &manifest)?;
        outcome.written.extend([path.to_path_buf(), mpath]);
        Ok(())
    }

    /// Mines top-k negatives for every ingested pair.
    pub async fn mine(&self, source: MineSource, k: Option<usize>) -> Result<StepOutcome> {
        let mut outcome = StepOutcome::default();
        let (pairs, corpus) = self.load_ingested()?;
        let (sets, stem, tag) = match source {
            MineSource::Bm25 => {
                let k = k.unwrap_or(self.config.bm25.k);
                if k == 0 {
                    return Err(Error::Config("k must be at least 1".into()));
                }
                if self.dry_run {
                    outcome.say(format!("dry run: would mine bm25 top-{k} for {} pairs over {} passages", pairs.len(), corpus.len()));
                    return Ok(outcome);
                }
                let index = build_index(&corpus, self.config.bm25.params())?;
                let mut sets = Vec::with_capacity(pairs.len());
                for pair in &pairs {
                    let start = Instant::now();
                    sets.push(mine_bm25(&index, &corpus, pair, k)?);
                    log::info!("mine bm25 {} in {:.2?}", pair.query_id, start.elapsed());
                }
                (sets, "bm25", SELECTOR_BM25.to_string())
            }
            MineSource::Embed => {
                let k = k.unwrap_or(self.config.embed.k);
                if k == 0 {
                    return Err(Error::Config("k must be at least 1".into()));
                }
                let provider = self.embedding_provider()?;
                if self.dry_run {
                    outcome.say(format!(
                        "dry run: would mine {} top-{k} for {} pairs over {} passages",
                        provider.model_id(),
                        pairs.len(),
                        corpus.len()
                    ));
                    return Ok(outcome);
                }
                let vectors: Vec<EmbeddingVector> = embed_corpus(
                    provider.as_ref(),
                    &corpus,
                    self.config.embed.batch_size,
                    self.config.embed.max_in_flight,
                )
                .await?;
                let mut sets = Vec::with_capacity(pairs.len());
                for pair in &pairs {
                    let start = Instant::now();
                    sets.push(mine_embed(provider.as_ref(), &corpus, &vectors, pair, k).await?);
                    log::info!("mine embed {} in {:.2?}", pair.query_id, start.elapsed());
                }
                (sets, "embed", format!("embed:{}", provider.model_id()))
            }
        };
        let path = self.negatives_path(stem);
        self.write_negatives(&mut outcome, &path, tag.clone(), &sets, None)?;
        outcome.say(format!("mined {} negative sets ({tag}) into {}", sets.len(), path.display()));
        Ok(outcome)
    }

    /// Generates negatives with the configured chat model. Pairs whose
    /// attempts run out are recorded and skipped; a transport failure
    /// aborts the step without writing.
    pub async fn generate(&self, model: Option<&str>, endpoint: Option<&str>) -> Result<StepOutcome> {
        let mut outcome = StepOutcome::default();
        let mut gen = self.config.llm.generation.clone();
        if let Some(m) = model {
            gen.model_id = m.to_string();
        }
        gen.validate()?;
        let endpoint = endpoint
            .map(str::to_string)
            .or_else(|| self.config.llm.endpoint.clone())
            .ok_or_else(|| Error::Config("no llm endpoint configured".into()))?;
        let (pairs, _) = self.load_ingested()?;
        let stem = format!("llm-{}", slug(&gen.model_id));
        let neg_path = self.negatives_path(&stem);
        let records_path = self.out(&format!("generation/{stem}.records.jsonl"));
        if self.dry_run {
            outcome.say(format!(
                "dry run: would ask {} at {endpoint} for {} pairs ({} in flight), writing {}",
                gen.model_id,
                pairs.len(),
                self.config.llm.parallelism,
                neg_path.display()
            ));
            return Ok(outcome);
        }
        let client = OpenAiChatClient::new(&endpoint, gen.request_timeout(), self.config.llm.requests_per_second)?;
        let results = generate_many(&client, &pairs, &gen, self.config.llm.parallelism).await;
        let mut sets = Vec::new();
        let mut records = Vec::new();
        let mut failed = 0;
        for (pair, result) in pairs.iter().zip(results) {
            match result {
                Ok((set, record)) => {
                    sets.push(set);
                    records.push(record);
                }
                Err(Error::GenerationExhausted {
                    query_id,
                    attempts,
                    reason,
                    last_raw,
                }) => {
                    log::warn!("query {query_id}: giving up after {attempts} attempts ({reason})");
                    failed += 1;
                    records.push(GenerationRecord {
                        query_id,
                        model_id: gen.model_id.clone(),
                        raw_response: last_raw.unwrap_or_default(),
                        attempts,
                        error: Some(reason),
                        ..GenerationRecord::default()
                    });
                }
                Err(e) => {
                    log::error!("query {}: {e}", pair.query_id);
                    return Err(e);
                }
            }
        }
        let source = format!("llm:{}", gen.model_id);
        self.write_negatives(&mut outcome, &neg_path, source, &sets, Some(failed))?;
        jsonl::write_records(&records_path, &records)?;
        outcome.written.push(records_path);
        outcome.say(format!(
            "generated negatives for {} of {} pairs with {} ({failed} failed)",
            sets.len(),
            pairs.len(),
            gen.model_id
        ));
        Ok(outcome)
    }

    /// Recipes named by `names`; `"paper"` expands to the full book.
    /// Returns each recipe with whether it was named explicitly.
    pub fn resolve_recipes(&self, names: &[String]) -> Result<Vec<(Recipe, bool)>> {
        let book = recipe_book_from_paper(&self.config.llm.labels);
        let mut out: Vec<(Recipe, bool)> = Vec::new();
        for name in names {
            if name == "paper" {
                out.extend(book.iter().cloned().map(|r| (r, false)));
            } else {
                let recipe = book
                    .iter()
                    .find(|r| &r.name == name)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown recipe {name}")))?;
                out.push((recipe, true));
            }
        }
        for (r, _) in &mut out {
            r.mode = self.config.mix_mode;
        }
        Ok(out)
    }

    /// Composes and exports training sets. Book recipes whose sources were
    /// never produced are skipped; an explicitly named one is an error.
    pub fn mix(&self, recipes: Option<&[String]>) -> Result<StepOutcome> {
        let mut outcome = StepOutcome::default();
        let names = recipes.unwrap_or(&self.config.recipes);
        let resolved = self.resolve_recipes(names)?;
        let (pairs, corpus) = self.load_ingested()?;

        let mut runnable = Vec::new();
        let mut needed: BTreeMap<String, PathBuf> = BTreeMap::new();
        for (recipe, explicit) in resolved {
            let mut missing = None;
            for s in &recipe.sources {
                let p = self.selector_path(s)?;
                if !p.is_file() {
                    missing = Some((s.clone(), p));
                    break;
                }
            }
            match missing {
                Some((s, p)) if explicit => {
                    return Err(Error::Config(format!(
                        "recipe {}: source {s} has no negatives file ({})",
                        recipe.name,
                        p.display()
                    )))
                }
                Some((s, _)) => outcome.say(format!("skip recipe {}: source {s} not produced", recipe.name)),
                None => {
                    for s in &recipe.sources {
                        needed.insert(s.clone(), self.selector_path(s)?);
                    }
                    runnable.push(recipe);
                }
            }
        }
        if runnable.is_empty() {
            return Err(Error::Config("no recipe has all of its sources".into()));
        }
        let mut sources = NegativeSources::new();
        for (selector, path) in &needed {
            sources.insert(selector.clone(), read_negative_sets(path, &corpus)?);
        }
        let mut compositions = Vec::new();
        for recipe in &runnable {
            compositions.push((recipe, compose(recipe, &pairs, &sources)?));
        }
        if self.dry_run {
            for (recipe, c) in &compositions {
                outcome.say(format!("dry run: recipe {} would have {} rows", recipe.name, c.examples.len()));
            }
            return Ok(outcome);
        }
        for (recipe, c) in compositions {
            let path = self.mix_path(&recipe.name);
            let manifest = export(&c.examples, &recipe.name, &path)?;
            outcome.say(format!(
                "recipe {}: {} rows, {} negatives, {} pairs skipped",
                recipe.name,
                manifest.examples,
                manifest.negatives,
                c.skipped.len()
            ));
            outcome.written.extend([mixer::manifest_path(&path), path]);
        }
        Ok(outcome)
    }

    /// Scores a run with nDCG@k. Without a run file, one is produced by
    /// retrieving the ingested queries over the corpus.
    pub async fn eval(&self, qrels: Option<&Path>, run: Option<&Path>) -> Result<StepOutcome> {
        let mut outcome = StepOutcome::default();
        let c = &self.config.eval;
        let qrels_path = qrels
            .map(Path::to_path_buf)
            .or_else(|| c.qrels.clone())
            .ok_or_else(|| Error::Config("no qrels file given".into()))?;
        require_file(&qrels_path, "qrels file")?;
        let run_path = run.map(Path::to_path_buf).or_else(|| c.run.clone());
        if let Some(p) = &run_path {
            require_file(p, "run file")?;
        }
        let qrels = Qrels::read(&qrels_path)?;

        let (run, produced) = match &run_path {
            Some(p) => (RunRanking::read(p)?, false),
            None => {
                let corpus = match &c.corpus {
                    Some(p) => {
                        require_file(p, "eval corpus")?;
                        PassageCorpus::from_passages(read_passages(p)?)?
                    }
                    None => self.load_ingested()?.1,
                };
                let queries: Vec<(String, String)> = match &c.queries {
                    Some(p) => {
                        require_file(p, "queries file")?;
                        read_queries(p)?
                    }
                    None => self
                        .load_ingested()?
                        .0
                        .into_iter()
                        .map(|p| (p.query_id, p.query))
                        .collect(),
                };
                if self.dry_run {
                    outcome.say(format!(
                        "dry run: would retrieve {} queries over {} passages ({:?}) and score nDCG@{}",
                        queries.len(),
                        corpus.len(),
                        c.retriever,
                        c.k
                    ));
                    return Ok(outcome);
                }
                let run = match c.retriever {
                    RetrieverKind::Bm25 => {
                        let index = build_index(&corpus, self.config.bm25.params())?;
                        make_run(&Retriever::Bm25(&index), &queries, &corpus, c.depth).await?
                    }
                    RetrieverKind::Embed => {
                        let provider = self.embedding_provider()?;
                        let vectors = embed_corpus(
                            provider.as_ref(),
                            &corpus,
                            self.config.embed.batch_size,
                            self.config.embed.max_in_flight,
                        )
                        .await?;
                        let r = Retriever::Dense {
                            provider: provider.as_ref(),
                            vectors: &vectors,
                        };
                        make_run(&r, &queries, &corpus, c.depth).await?
                    }
                };
                (run, true)
            }
        };
        let metric = ndcg_at_k_with(&run, &qrels, c.k, c.gain)?;
        outcome.say(format!(
            "nDCG@{} = {:.5} over {} queries ({} skipped)",
            c.k,
            metric.mean,
            metric.per_query.len(),
            metric.skipped.len()
        ));
        if self.dry_run {
            return Ok(outcome);
        }
        if produced {
            let p = self.out("eval/run.trec");
            jsonl::write_file(&p, &run.to_trec("hardneg"))?;
            outcome.written.push(p);
        }
        let p = self.out("eval/metrics.json");
        write_json(&p, &json!({"metric": "ndcg", "gain": c.gain, "result": metric}))?;
        outcome.written.push(p);
        Ok(outcome)
    }

    /// Aggregates a (config × dataset) score file into the averaged table
    /// and the aggregated-vs-individual comparison.
    pub fn report(&self, cells_path: Option<&Path>) -> Result<StepOutcome> {
        let mut outcome = StepOutcome::default();
        let cells = match cells_path {
            Some(p) => {
                require_file(p, "cells file")?;
                CellsFile::read(p)?
            }
            None => CellsFile::bundled_table1(),
        };
        let table = aggregate_table(&cells)?;
        let fams = families(&self.config.llm.labels);
        let computed = compare_aggregated_vs_individual(&table.averages(), &fams)?;
        let reported_avgs = cells.reported_averages();
        let reported = if reported_avgs.is_empty() {
            None
        } else {
            Some(compare_aggregated_vs_individual(&reported_avgs, &fams)?)
        };
        let mismatches: Vec<_> = table
            .rows
            .iter()
            .filter_map(|r| {
                let rep = r.reported_avg?;
                (!within_half_milli(r.average, rep)).then(|| {
                    json!({"config": r.config, "computed": r.average, "reported": rep})
                })
            })
            .collect();

        let mut text = table.render();
        text.push('\n');
        text.push_str(&render_comparisons("aggregated vs individual (computed averages)", &computed));
        if let Some(rep) = &reported {
            text.push_str(&render_comparisons("aggregated vs individual (reported averages)", rep));
        }
        for m in &mismatches {
            text.push_str(&format!(
                "note: {} computed {} differs from reported {} by more than 0.0005\n",
                m["config"].as_str().unwrap_or(""),
                format_3(m["computed"].as_f64().unwrap_or(f64::NAN)),
                format_3(m["reported"].as_f64().unwrap_or(f64::NAN))
            ));
        }
        outcome.messages.push(text.clone());
        if self.dry_run {
            return Ok(outcome);
        }
        let txt = self.out("report/report.txt");
        let js = self.out("report/report.json");
        jsonl::write_file(&txt, &text)?;
        write_json(
            &js,
            &json!({
                "table": table,
                "comparisons_computed": computed,
                "comparisons_reported": reported,
                "average_mismatches": mismatches,
            }),
        )?;
        outcome.written.extend([txt, js]);
        Ok(outcome)
    }
}

#[derive(Deserialize)]
struct QueryRecord {
    #[serde(alias = "_id", alias = "query_id")]
    id: String,
    #[serde(alias = "query")]
    text: String,
}

/// Queries as JSONL, `{"_id","text"}` (BEIR) or `{"query_id","query"}`.
fn read_queries(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(jsonl::read_all::<QueryRecord>(path)?
        .into_iter()
        .map(|q| (q.id, q.text))
        .collect())
}

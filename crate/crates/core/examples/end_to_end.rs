//! The whole pipeline on the bundled sample: ingest, mine with both
//! miners, generate with the mock, mix, evaluate and report.
//!
//!     cargo run --example end_to_end

use std::path::Path;

use hardneg::config::PipelineConfig;
use hardneg::mock::MockServer;
use hardneg::pipeline::{MineSource, Pipeline};

#[tokio::main]
async fn main() -> hardneg::Result<()> {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let out = tempfile_dir();
    let server = MockServer::start().await.expect("bind mock");

    let mut config = PipelineConfig::minimal(sample.join("pairs.jsonl"), &out);
    config.paths.corpus = Some(sample.join("extra_corpus.jsonl"));
    config.bm25.k = 3;
    config.embed.k = 3;
    config.llm.endpoint = Some(server.url());
    config.llm.generation.model_id = "qwen3-4b".into();
    config.recipes = vec!["bm25".into(), "ce".into(), "bm25+ce+qwen3-4b".into()];
    config.eval.qrels = Some(sample.join("qrels.tsv"));
    let pipeline = Pipeline::new(config, false)?;

    let steps = [
        pipeline.ingest(None)?,
        pipeline.mine(MineSource::Bm25, None).await?,
        pipeline.mine(MineSource::Embed, None).await?,
        pipeline.generate(None, None).await?,
        pipeline.mix(None)?,
        pipeline.eval(None, None).await?,
    ];
    for step in &steps {
        for m in &step.messages {
            println!("{m}");
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("hardneg-e2e-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

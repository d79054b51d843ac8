use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hardneg::config::PipelineConfig;
use hardneg::mock::MockServer;
use hardneg::pipeline::{MineSource, Pipeline, StepOutcome};
use hardneg::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "hardneg", version, about = "Hard-negative mining and training-set construction")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides sample.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate and report the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(long, short, global = true)]
    verbose: bool,
    /// Overrides paths.output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read query/positive pairs and build the passage corpus.
    Ingest {
        /// Pair file, when no config is given.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Extra corpus passages.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Mine negatives with bm25 or an embedding model.
    Mine {
        #[arg(long, default_value = "bm25")]
        source: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Generate negatives with a chat model.
    Generate {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Compose training sets from recipes ("paper" for all 22).
    Mix {
        #[arg(long)]
        recipe: Vec<String>,
    },
    /// nDCG@k of a run against qrels.
    Eval {
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Averaged results table and aggregated-vs-individual comparison.
    Report {
        /// Score matrix; the bundled published table when omitted.
        cells: Option<PathBuf>,
    },
    /// Serve the offline chat/embedding mock until interrupted.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8089")]
        addr: std::net::SocketAddr,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match (&cli.config, &cli.command) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Command::Ingest { pairs: Some(p), .. }) => PipelineConfig::minimal(p, "out"),
        (None, _) => PipelineConfig::minimal("pairs.jsonl", "out"),
    };
    if let Command::Ingest { pairs, corpus } = &cli.command {
        if let Some(p) = pairs {
            config.paths.pairs = p.clone();
        }
        if corpus.is_some() {
            config.paths.corpus = corpus.clone();
        }
    }
    if let Some(out) = &cli.out {
        config.paths.output_dir = out.clone();
    }
    Ok(config)
}

async fn run(cli: Cli) -> Result<StepOutcome> {
    if let Command::ServeMock { addr } = cli.command {
        let server = MockServer::bind(addr, Vec::new(), hardneg::mock::Fallback::Canonical)
            .await
            .map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        println!("mock listening on {}", server.url());
        server.wait().await;
        return Ok(StepOutcome::default());
    }
    let pipeline = Pipeline::new(load_config(&cli)?, cli.dry_run)?;
    match &cli.command {
        Command::Ingest { .. } => pipeline.ingest(cli.seed),
        Command::Mine { source, k } => pipeline.mine(source.parse::<MineSource>()?, *k).await,
        Command::Generate { model, endpoint } => {
            pipeline.generate(model.as_deref(), endpoint.as_deref()).await
        }
        Command::Mix { recipe } => {
            pipeline.mix((!recipe.is_empty()).then_some(recipe.as_slice()))
        }
        Command::Eval { qrels, run } => pipeline.eval(qrels.as_deref(), run.as_deref()).await,
        Command::Report { cells } => pipeline.report(cells.as_deref()),
        Command::ServeMock { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .init();
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match rt.block_on(run(cli)) {
        Ok(outcome) => {
            for m in &outcome.messages {
                println!("{m}");
            }
            for p in &outcome.written {
                log::debug!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

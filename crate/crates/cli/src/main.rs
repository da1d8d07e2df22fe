//! `phyto`: the plant-health text pipeline as subcommands over one JSON
//! config. Exit codes: 0 success, 1 operation error, 2 schema error,
//! 3 missing upstream artifact.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "phyto", version, about = "French plant-health bulletin text pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-document parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Decision threshold in (0, 1).
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// offline-test, embedding-init or pretrained:<path>.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Output root holding run directories and LATEST-<command> pointers.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Primary input override: an upstream run directory, or the source
    /// file/directory for ingest, filter-tweets, predict and risk datasets.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Artifact directory for evaluate, predict and classify-tweets.
    #[arg(long, global = true)]
    artifact: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Load bulletins and tags into corpus.jsonl.
    Ingest,
    /// Clean the ingested corpus.
    Clean,
    /// Build the language-model corpus from the ingested documents.
    BuildLmCorpus,
    /// Chunk and label documents (or load risk sentences) and split them.
    BuildDataset,
    /// Masked-token fine-tuning of an embedding encoder.
    FinetuneLm,
    /// Train the two-label classification head.
    Train,
    /// Score the held-out split with the trained artifact.
    Evaluate,
    /// Classify free texts.
    Predict {
        /// Text to classify; repeatable.
        #[arg(long)]
        text: Vec<String>,
    },
    /// Keep tweets that mention a known concept or tag.
    FilterTweets,
    /// Classify filtered tweets.
    ClassifyTweets,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::Clean => "clean",
            Self::BuildLmCorpus => "build-lm-corpus",
            Self::BuildDataset => "build-dataset",
            Self::FinetuneLm => "finetune-lm",
            Self::Train => "train",
            Self::Evaluate => "evaluate",
            Self::Predict { .. } => "predict",
            Self::FilterTweets => "filter-tweets",
            Self::ClassifyTweets => "classify-tweets",
        }
    }
}

fn execute(cli: Cli) -> Result<commands::Outcome, CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        threshold: cli.threshold,
        backend: cli.backend,
        out: cli.out,
        env_data_dir: std::env::var_os("PHYTO_DATA_DIR").map(PathBuf::from),
    };
    let cfg = RunConfig::load(cli.config.as_deref())?.resolve(&overrides)?;
    if let Some(n) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::op)?;
    }
    let texts = match &cli.command {
        Command::Predict { text } => text.clone(),
        _ => Vec::new(),
    };
    let ctx = Context { cfg, input: cli.input, artifact: cli.artifact, texts };
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Clean => commands::clean(&ctx),
        Command::BuildLmCorpus => commands::build_lm(&ctx),
        Command::BuildDataset => commands::build_dataset(&ctx),
        Command::FinetuneLm => commands::finetune_lm(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Evaluate => commands::evaluate_cmd(&ctx),
        Command::Predict { .. } => commands::predict(&ctx),
        Command::FilterTweets => commands::filter_tweets_cmd(&ctx),
        Command::ClassifyTweets => commands::classify_tweets_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match execute(cli) {
        Ok(outcome) => {
            let line = serde_json::json!({
                "command": name,
                "run_dir": outcome.run_dir.display().to_string(),
                "summary": outcome.summary,
            });
            println!("{line}");
            match outcome.failure {
                None => ExitCode::SUCCESS,
                Some(e) => {
                    eprintln!("{}", e.report(name));
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Err(e) => {
            eprintln!("{}", e.report(name));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use cfc_core::pipeline::{parse_stages, serve_review, CurationConfig, Pipeline, Stage};
use cfc_core::synthetic::SyntheticCorpus;
use cfc_core::Executor;
use clap::{Parser, Subcommand};

/// Coarse-to-fine video dataset curation.
#[derive(Debug, Parser)]
#[command(name = "cfc", version)]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker pool size.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Sampling seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run all stages, or a contiguous subset, resuming where a previous run stopped.
    Run {
        /// Comma-separated stage list, e.g. `filter,sample`.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Detect scene boundaries and cut clips.
    Split,
    /// Score split clips.
    Score,
    /// Apply quality thresholds.
    Filter,
    /// Draw the category-balanced sample.
    Sample,
    /// Join captions and reject misaligned or failed ones.
    CaptionFilter,
    /// Write the final and finetune manifests and the report.
    Finalize,
    /// Noun and verb statistics over the final captions.
    VocabReport,
    /// Score distributions of the scored and final manifests.
    Report,
    /// Serve the human review queue.
    ServeReview {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Print the default configuration.
    DefaultConfig,
    /// Write the bundled synthetic corpus and its config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        corpus_seed: u64,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<CurationConfig> {
    let mut config = match &cli.config {
        Some(path) => CurationConfig::load(path)?,
        None => {
            let mut c = CurationConfig::default();
            c.resolve_paths(&std::env::current_dir().context("current directory")?);
            c
        }
    };
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(s) = cli.seed {
        config.sample.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let single = |stage: Stage| Some(vec![stage]);
    let stages = match &cli.command {
        Command::Run { stages } => match stages {
            Some(list) => Some(parse_stages(list)?),
            None => None,
        },
        Command::Split => single(Stage::Split),
        Command::Score => single(Stage::Score),
        Command::Filter => single(Stage::Filter),
        Command::Sample => single(Stage::Sample),
        Command::CaptionFilter => single(Stage::CaptionFilter),
        Command::Finalize => single(Stage::Finalize),
        Command::VocabReport => {
            let stats = Pipeline::new(load_config(&cli)?)?.vocab_report()?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            return Ok(());
        }
        Command::Report => {
            let (_, files) = Pipeline::new(load_config(&cli)?)?.write_report()?;
            for f in files {
                println!("{}", f.display());
            }
            return Ok(());
        }
        Command::ServeReview { port } => {
            serve_review(&load_config(&cli)?, *port)?;
            return Ok(());
        }
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&CurationConfig::default())?);
            return Ok(());
        }
        Command::Synth { out, corpus_seed } => {
            let corpus = SyntheticCorpus::generate(*corpus_seed);
            let exec = Executor::parallel(cli.workers);
            let config = corpus.write_to(out, &exec)?;
            println!("{}", config.display());
            return Ok(());
        }
    };
    let summary = Pipeline::new(load_config(&cli)?)?.run(stages.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<cfc_core::Error>()
                .map_or(1, cfc_core::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

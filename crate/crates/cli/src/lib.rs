//! Command-line driver: generate or load a corpus, train the speech-network
//! variants, evaluate any scorer and tabulate the results.

pub mod config;
pub mod pipeline;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use kws_core::baselines::ScorerKind;
use kws_core::corpus::Split;

pub use config::{Overrides, RunConfig};
pub use pipeline::{Layout, ModelRef, OutputLock};

#[derive(Debug, Parser)]
#[command(name = "kws", version, about = "Cross-lingual keyword spotting experiments")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory (overrides the config file and KWS_OUT_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Override a config key, e.g. `--set train.max_epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus, its lexicon and tagger outputs.
    Generate,
    /// Convert a manifest's waveforms into frame files.
    Featurize,
    /// Train a speech-network variant.
    Train {
        #[arg(long)]
        model: Option<ScorerKind>,
    },
    /// Score a split and write metrics, a PR curve and ranked lists.
    Evaluate {
        /// Scorer kind or checkpoint path.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Rank utterances for one keyword.
    Search {
        #[arg(long)]
        keyword: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Scorer kind or checkpoint path.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Tabulate all evaluations of a split side by side.
    Report {
        /// Comma-separated scorer kinds; all evaluated kinds by default.
        #[arg(long, value_delimiter = ',')]
        models: Vec<ScorerKind>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::load(
            self.config.as_deref(),
            &Overrides {
                out_dir: self.out.clone(),
                seed: self.seed,
                set: self.set.clone(),
            },
        )
    }

    pub fn log_level(&self) -> log::LevelFilter {
        match (self.quiet, self.verbose) {
            (true, _) => log::LevelFilter::Warn,
            (false, 0) => log::LevelFilter::Info,
            (false, 1) => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    }
}

/// Runs one parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let config = cli.run_config()?;
    let _lock = OutputLock::acquire(&Layout::new(&config.out_dir))?;
    let model = |m: &Option<String>| m.as_deref().map(ModelRef::parse).unwrap_or(ModelRef::Kind(config.model));
    match &cli.command {
        Command::Generate => pipeline::generate(&config, out),
        Command::Featurize => pipeline::featurize(&config, out),
        Command::Train { model } => pipeline::train(&config, model.unwrap_or(config.model), out),
        Command::Evaluate { model: m, split } => pipeline::evaluate(&config, &model(m), *split, out).map(|_| ()),
        Command::Search {
            keyword,
            top,
            model: m,
            split,
        } => pipeline::search(&config, &model(m), keyword, *top, *split, out).map(|_| ()),
        Command::Report { models, split } => pipeline::report(&config, models, *split, out).map(|_| ()),
    }
}

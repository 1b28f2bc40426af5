//! Command-line driver: configuration, provider wiring and pipeline commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod providers;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Session;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "assaymol",
    version,
    about = "Bioassay-conditioned molecule generation pipeline"
)]
pub struct Cli {
    #[arg(long, global = true, default_value = "assaymol.toml")]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Serve every model role with deterministic mock providers.
    #[arg(long, global = true)]
    pub mock_llm: bool,
    /// JSON-lines file with one target query per line.
    #[arg(long, global = true)]
    pub targets: Option<PathBuf>,
    /// Targets processed concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Build the assay store from raw documents.
    Ingest,
    /// Embed every stored assay into the vector index.
    Index,
    /// Retrieve, filter and assess assays for each target.
    Retrieve,
    /// Summarize context and generate molecules.
    Generate,
    /// Optimize generated molecules against the counter-target.
    Optimize,
    /// Score molecules and aggregate metrics.
    Evaluate,
    /// Run all stages in order.
    Pipeline,
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = RunConfig::load(&cli.config, cli.seed)?;
    let session = Session::new(cfg, cli.mock_llm, cli.targets.as_deref(), cli.parallel)?;
    match cli.command {
        Command::Ingest => commands::cmd_ingest(&session),
        Command::Index => commands::cmd_index(&session),
        Command::Retrieve => commands::cmd_retrieve(&session),
        Command::Generate => commands::cmd_generate(&session),
        Command::Optimize => commands::cmd_optimize(&session),
        Command::Evaluate => commands::cmd_evaluate(&session),
        Command::Pipeline => commands::cmd_pipeline(&session),
    }
}

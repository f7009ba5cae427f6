//! The `phenoicu` batch driver: declarative config in, reports and plot files
//! out.
//!
//! ```text
//! phenoicu <generate|ingest|train|eval|explain|significance|ablation>
//!          --config <path> [--seed N] [--out PATH]
//! ```
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
//! `PHENOICU_THREADS` caps worker parallelism. Flags override config keys
//! (`--seed` replaces both the run seed and the generator seed; `--out`
//! replaces the output directory, or the output file for `generate`).

mod commands;
mod config;
mod manifest;

pub use config::{
    AnnotationSourceKind, ExplainSection, FeatureSection, ModelKind, ModelSection, PathsSection,
    RunConfig, SplitSection, Variant,
};
pub use manifest::Manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "phenoicu",
    version,
    about = "Interpretable ICU outcome pipeline: synthetic cohorts, phenotype features, tree/LSTM models, Shapley explanations, bootstrap evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the run seed (and the generator seed for `generate`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory (output file for `generate`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort JSONL.
    Generate(CommonArgs),
    /// Validate and normalize a cohort; write summary statistics and labels.
    Ingest(CommonArgs),
    /// Assemble features and train the configured model.
    Train(CommonArgs),
    /// Score the held-out split and write the metric report.
    Eval(CommonArgs),
    /// Shapley importance report and a per-patient timeline.
    Explain(CommonArgs),
    /// Pairwise bootstrap win-rate matrix over feature variants.
    Significance(CommonArgs),
    /// Propagation on/off ablation with a delta table.
    Ablation(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Generate(a)
            | Command::Ingest(a)
            | Command::Train(a)
            | Command::Eval(a)
            | Command::Explain(a)
            | Command::Significance(a)
            | Command::Ablation(a) => a,
        }
    }
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("PHENOICU_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            // ignore the error when a global pool already exists (tests)
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Run one parsed command. This is the testable entry the binary wraps.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    init_thread_pool();
    let args = cli.command.args().clone();
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.generator.seed = seed;
    }
    match cli.command {
        Command::Generate(_) => commands::cmd_generate(&cfg, args.out),
        Command::Ingest(_) => commands::cmd_ingest(&cfg, args.out),
        Command::Train(_) => commands::cmd_train(&cfg, args.out),
        Command::Eval(_) => commands::cmd_eval(&cfg, args.out),
        Command::Explain(_) => commands::cmd_explain(&cfg, args.out),
        Command::Significance(_) => commands::cmd_significance(&cfg, args.out),
        Command::Ablation(_) => commands::cmd_ablation(&cfg, args.out),
    }
}

/// Parse arguments, run, and map errors to exit codes.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

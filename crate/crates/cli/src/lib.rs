//! Command-line front end: task corpora, run matrices and report files.
//!
//! Exit codes: 0 on success, 1 on usage or config errors, 2 on data errors.
//! Failures print one JSON object to stderr (see [`CliError::to_line`]).

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod tables;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Overrides, Settings};
pub use error::CliError;
pub use manifest::{load_manifest, read_manifest, LoadOptions, TaskManifest};

#[derive(Debug, Parser)]
#[command(
    name = "bsfbench",
    version,
    about = "Sequential-design benchmark harness"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit and select a task's oracle, write it, and print its LOO R².
    TrainOracle {
        /// Task directory, manifest, or directory of task directories.
        #[arg(long)]
        task: PathBuf,
        /// Comma-separated families to consider.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "ridge,random_forest,gradient_boosting"
        )]
        families: Vec<String>,
    },
    /// Run the GP-UCB and random-search baselines.
    Baseline {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "gp_ucb,random")]
        optimizers: Vec<String>,
    },
    /// Run external agents or replay stored trajectories.
    Run {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// `NAME=cmd:PROGRAM ARGS...` or `NAME=http:URL`. Repeatable.
        #[arg(long = "agent", value_name = "NAME=SPEC")]
        agents: Vec<String>,
        /// `NAME=STORE_DIR`: replays the runs of optimizer NAME found in
        /// STORE_DIR. Repeatable.
        #[arg(long = "replay", value_name = "NAME=DIR")]
        replays: Vec<String>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "domain_aware,domain_agnostic"
        )]
        conditions: Vec<String>,
        #[arg(long, default_value_t = bsfbench_core::optim::agent::DEFAULT_MAX_RETRIES)]
        max_retries: usize,
        /// HTTP transport timeout.
        #[arg(long, default_value_t = 120)]
        timeout_secs: u64,
    },
    /// Emit the long-form metric table.
    Metrics {
        #[arg(long)]
        store: PathBuf,
        /// Task corpus; needed for diversity rows.
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip corrupt store records instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Disagreement, pass rates, win rates, convergent gaps and
    /// leave-one-out tables.
    Analyze {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Horizon of the headline comparison; defaults to the largest.
        #[arg(long)]
        horizon: Option<usize>,
        /// Competitor label used as the pass-rate baseline.
        #[arg(long, default_value = "gp_ucb")]
        baseline: String,
        /// Also emit the non-canonical tie-set-intersection rates.
        #[arg(long)]
        permissive: bool,
    },
    /// Per-task audit reports and the cross-task summary.
    Audit {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot-ready series files.
    Report {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "gp_ucb")]
        baseline: String,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.overrides)?;
    commands::dispatch(cli.command, &settings)
}

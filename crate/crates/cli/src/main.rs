//! `irdp`: experiment driver for the individual Renyi accounting library.

mod artifacts;
mod commands;
mod config;
mod error;
mod snapshot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IRDP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "irdp", version, about = "Individual Renyi privacy accounting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// RDP to DP conversions and zCDP budgets.
    Convert(CommonArgs),
    /// Feed a loss stream to an RDP or DP filter.
    Filter(StreamArgs),
    /// Per-point odometer bounds for a stream of individual losses.
    Odometer(StreamArgs),
    /// Scripted adaptive query session with individual filtering.
    Queries(StreamArgs),
    /// Plain or individually filtered private gradient descent.
    Gd(CommonArgs),
    /// Run the exact oracle suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Resume from a snapshot written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write a snapshot of the final state here.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Process at most this many stream entries.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// JSON run configuration; defaults are used when absent.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Convert(a) => commands::convert::run(&a.config, a.out_dir),
        Command::Filter(a) => commands::filter::run(&a.into()),
        Command::Odometer(a) => commands::odometer::run(&a.into()),
        Command::Queries(a) => commands::queries::run(&a.into()),
        Command::Gd(a) => commands::gd::run(&a.config, a.out_dir),
        Command::Validate(a) => commands::validate::run(a.config.as_deref(), a.out_dir),
    }
}

impl From<StreamArgs> for commands::StreamOptions {
    fn from(a: StreamArgs) -> Self {
        Self {
            config: a.common.config,
            out_dir: a.common.out_dir,
            resume: a.resume,
            snapshot_out: a.snapshot_out,
            stop_after: a.stop_after,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("irdp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

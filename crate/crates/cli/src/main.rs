//! `benchirt`: fit item response models to benchmark result matrices and
//! report difficulty, discrimination, ability and generality.
//!
//! Every subcommand writes fixed file names under `--out`:
//!
//! | command       | files                                                              |
//! |---------------|--------------------------------------------------------------------|
//! | `fit`         | `model.json`, `filter_report.json`, `convergence.json`, `seed_consistency.json` |
//! | `analyze`     | `indicators.*`, `correlations.*`, `dominance.*`, `binning.json`    |
//! | `curves`      | `icc.*`, `acc_theoretical.*`, `acc_empirical.*`, `variance_envelope.*` |
//! | `score-agent` | `scored_agents.json`                                               |
//! | `simulate`    | `simulated.csv`, `simulated.json`                                  |
//!
//! `*` is `csv` or `json` per `--format`.
//! Exit codes: 0 success, 2 input error, 3 non-convergence, 4 id mismatch.

mod cmd;
mod config;
mod error;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::output::{Format, OutDir};

#[derive(Debug, Parser)]
#[command(
    name = "benchirt",
    version,
    about = "Item response theory indicators for AI benchmark results"
)]
pub struct Cli {
    /// Directory receiving all output files (created if missing).
    #[arg(long, global = true, default_value = "benchirt-out")]
    pub out: PathBuf,
    /// Seed for fitting perturbations and simulation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Encoding of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// File of `key=value` lines naming long flags; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, normalize, binarize, filter and fit a model.
    Fit(cmd::fit::FitArgs),
    /// Agent indicators, their correlations and dominance pairs.
    Analyze(cmd::analyze::AnalyzeArgs),
    /// Plot-ready point series: ICCs, ACCs and the variance envelope.
    Curves(cmd::curves::CurvesArgs),
    /// Score new agents against a frozen model without refitting.
    ScoreAgent(cmd::score::ScoreArgs),
    /// Sample scores from a score model or a 2PL world.
    Simulate(cmd::simulate::SimulateArgs),
}

fn run(cli: Cli) -> Result<()> {
    let out = OutDir::create(&cli.out, cli.format)?;
    match &cli.command {
        Command::Fit(a) => cmd::fit::run(a, &cli, &out),
        Command::Analyze(a) => cmd::analyze::run(a, &out),
        Command::Curves(a) => cmd::curves::run(a, &out),
        Command::ScoreAgent(a) => cmd::score::run(a, &out),
        Command::Simulate(a) => cmd::simulate::run(a, &cli, &out),
    }
}

fn with_pool(cli: Cli) -> Result<()> {
    match cli.jobs {
        None => run(cli),
        Some(0) => Err(CliError::input("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::input(e.to_string()))?
            .install(|| run(cli)),
    }
}

fn main() -> ExitCode {
    let args = match config::merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match with_pool(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

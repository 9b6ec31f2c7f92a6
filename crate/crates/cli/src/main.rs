//! `contestlab`: run a scenario file through the contest model, the
//! simulator, the estimators and the ranking study.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contestlab::{EstimationError, FormatError, ModelError, RankingError, SimError};

#[derive(Parser, Debug)]
#[command(name = "contestlab", version, about = "Sabotage and self-promotion in peer-rated contests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the scenario's `out`, else `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the number of bootstrap replications.
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Performance gap, agent values and transition thresholds.
    Bounds(Common),
    /// Equilibrium label and utilities over a sabotage-cost grid.
    Sweep(Common),
    /// Simulate a rating panel.
    Simulate(Common),
    /// Fixed-effects models on a panel (simulated unless --panel is given).
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Winner changes after removing strategic ratings, against random removal.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Brute-force Nash check inside and just outside every region.
    Verify(Common),
}

#[derive(Debug)]
pub enum CliError {
    Format(FormatError),
    Model(ModelError),
    Sim(SimError),
    Estimation(EstimationError),
    Ranking(RankingError),
    Threads(String),
    VerificationFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Format(FormatError::Parse { .. } | FormatError::Io(_)) => 2,
            CliError::Threads(_) => 2,
            CliError::Format(FormatError::Schema { .. }) => 4,
            CliError::Format(FormatError::Invalid(_)) => 3,
            CliError::Estimation(EstimationError::NonConvergence { .. }) => 5,
            CliError::Model(_) | CliError::Sim(_) | CliError::Estimation(_) | CliError::Ranking(_) => 3,
            CliError::VerificationFailed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Format(e) => write!(f, "{e}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Sim(e) => write!(f, "{e}"),
            CliError::Estimation(e) => write!(f, "{e}"),
            CliError::Ranking(e) => write!(f, "{e}"),
            CliError::Threads(v) => write!(f, "CONTESTLAB_THREADS must be a positive integer, got `{v}`"),
            CliError::VerificationFailed(n) => write!(f, "{n} verification point(s) failed"),
        }
    }
}

macro_rules! from_error {
    ($($t:ty => $v:ident),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::$v(e)
            }
        })*
    };
}
from_error!(FormatError => Format, ModelError => Model, SimError => Sim, EstimationError => Estimation, RankingError => Ranking);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Format(FormatError::Io(e))
    }
}

fn limit_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CONTESTLAB_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::Threads(value.clone()))?;
    // fails only if a pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    limit_threads()?;
    match cli.command {
        Command::Bounds(c) => commands::bounds(&c),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Estimate { common, panel } => commands::estimate(&common, panel.as_deref()),
        Command::Rank { common, panel } => commands::rank(&common, panel.as_deref()),
        Command::Verify(c) => commands::verify(&c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

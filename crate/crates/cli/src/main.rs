use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
mod config;
mod output;

use output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Model(#[from] superrep::Error),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use superrep::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Model(
                E::InvalidDimension(_)
                | E::InvalidMarket(_)
                | E::InvalidPayoff(_)
                | E::InvalidControl(_)
                | E::InvalidNode(_)
                | E::Unsupported(_)
                | E::TreeTooLarge { .. }
                | E::NTooSmall { .. }
                | E::SingularVolatility
                | E::NotInGamma
                | E::OutsideBox(_),
            ) => 2,
            CliError::Io(_) | CliError::Model(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "superrep", version, about = "Superreplication prices under proportional transaction costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config in TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Also write the report to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Period counts, comma separated and strictly increasing.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Space nodes per axis for the PDE, or points per axis for the check.
    #[arg(long, global = true)]
    grid: Option<usize>,

    #[arg(long, global = true)]
    paths: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Superreplication price on the discrete tree from the primal and dual LPs.
    Price,
    /// Continuous-time limit price.
    Limit {
        /// Write the PDE value surfaces to this CSV file.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
    /// Discrete prices for several n against the limit.
    Converge,
    /// Invertibility checks on the volatility corridor.
    Check,
    /// Monte Carlo lower bound under the constructed martingale measure.
    Simulate,
    /// Built-in demonstrations that need no config.
    Counterexample {
        #[arg(value_enum)]
        which: Counterexample,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Counterexample {
    /// The invertibility condition fails and the discrete price drops below the payoff at s0.
    AssumptionEssential,
    /// Two bases with the same volatility give different limit prices.
    BasisDependence,
    /// A product binomial driver makes superreplication trivial.
    CrrTrivial,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let report = match cli.command {
        Command::Price => commands::price(c)?,
        Command::Limit { surface } => commands::limit(c, surface.as_deref())?,
        Command::Converge => commands::converge(c)?,
        Command::Check => {
            let (report, failure) = commands::check(c)?;
            report.emit(c.format, c.out.as_deref())?;
            return match failure {
                Some(msg) => Err(CliError::CheckFailed(msg)),
                None => Ok(()),
            };
        }
        Command::Simulate => commands::simulate(c)?,
        Command::Counterexample { which } => commands::counterexample(c, which)?,
    };
    report.emit(c.format, c.out.as_deref())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("superrep: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

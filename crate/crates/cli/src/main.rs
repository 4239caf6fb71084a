mod chart;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::Overrides;
use crate::error::CliError;

/// Traveling waves of the delayed nonlocal blowfly equation.
#[derive(Debug, Parser)]
#[command(name = "blowfly", version)]
struct Cli {
    /// Scenario file (TOML, or an output file with an embedded config header).
    #[arg(long, global = true, conflicts_with = "case")]
    config: Option<PathBuf>,

    /// Standard case to run when no config file is given.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=4))]
    case: Option<u8>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Artificial viscosity of the time stepper.
    #[arg(long, global = true)]
    mu: Option<f64>,

    /// Run the time stepper with zero viscosity; blow-up exits with code 5.
    #[arg(long = "diagnostic-no-viscosity", global = true)]
    no_viscosity: bool,

    /// Print the documented default config for the chosen case and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical speed, exponent pair and regime thresholds.
    Speeds,
    /// Solve for the traveling-wave profile.
    Profile,
    /// Evolve a perturbed profile and fit the decay of the error.
    Evolve,
    /// Critical pairs and regimes of the four standard cases.
    Table1,
    /// Cross-check the linear comparison problem against its spectral solution.
    LinearOracle,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.print_defaults {
        print!("{}", config::documented_defaults(cli.case.unwrap_or(1))?);
        return Ok(());
    }
    let overrides = Overrides {
        config: cli.config,
        case: cli.case,
        out: cli.out,
        mu: cli.mu,
        no_viscosity: cli.no_viscosity,
    };
    let run = Run {
        config: config::load(&overrides)?,
        diagnostic: cli.no_viscosity,
    };
    match cli.command.unwrap_or(Command::Evolve) {
        Command::Speeds => commands::speeds(&run),
        Command::Profile => commands::profile(&run),
        Command::Evolve => commands::evolve(&run),
        Command::Table1 => commands::table1(&run),
        Command::LinearOracle => commands::linear_oracle(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

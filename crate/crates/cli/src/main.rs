//! `doc-coord`: verify, synthesize and simulate coordination protocols from
//! JSON scenario files.
//!
//! Exit status is 0 on PASS, 2 on FAIL and 1 on any error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "doc-coord", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the scenario's gain with an LMI certificate and write verify_report.json.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Design a gain for the scenario and write synthesis.json.
    Synthesize {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate the closed loop and write trajectory.csv and metrics.json.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run verification and every configured seed on the bundled reference
    /// scenario (or the given one) and check the expected behaviour.
    ReproducePaper {
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Integration step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulation horizon.
    #[arg(long = "t-final")]
    pub t_final: Option<f64>,
    /// Seed for random initial states; replaces any seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Declared sector constant γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// JSON graph description replacing the scenario's graph.
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Gains (and optionally a certificate), e.g. a synthesis.json.
    #[arg(long, value_name = "FILE")]
    pub gains: Option<PathBuf>,
    /// Output directory. Defaults to $DOC_COORD_OUT, then the scenario's
    /// output_dir, then ./doc-coord-out.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify { config, common } => commands::verify(config, common),
        Command::Synthesize { config, common } => commands::synthesize(config, common),
        Command::Simulate { config, common } => commands::simulate(config, common),
        Command::ReproducePaper { config, common } => {
            commands::reproduce(config.as_deref(), common)
        }
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `geomc`: fit, recover and predict Bayesian spatial regression models.

mod config;
mod error;
mod load;
mod run;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use run::{Command, RunArgs};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Full-rank marginal sampler over the covariance parameters
    FitFull,
    /// Predictive-process (low-rank) Gibbs sampler
    FitPp,
    /// Composition draws of beta and spatial effects from a fit
    Recover,
    /// Posterior predictive draws at new locations
    Predict,
    /// Space-time dynamic model
    FitDynamic,
}

#[derive(Debug, Parser)]
#[command(name = "geomc", version, about = "Bayesian spatial regression by MCMC")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides sampler.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides [output] dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress banners and progress
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::FitFull => Command::FitFull,
        Cmd::FitPp => Command::FitPp,
        Cmd::Recover => Command::Recover,
        Cmd::Predict => Command::Predict,
        Cmd::FitDynamic => Command::FitDynamic,
    };
    let args = RunArgs {
        command,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    };
    match run::run(&args) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geomc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

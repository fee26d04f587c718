//! Command-line interface for the funreg solver: simulate synthetic studies,
//! fit and serialize models, predict new subjects, cross-validate penalty
//! grids, and run replicated benchmarks.
//!
//! Every command reads its parameters from an optional `key = value` config
//! file plus `key=value` overrides on the command line (overrides win, and
//! the dedicated `--seed` / `--out` flags win over both).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Settings;

#[derive(Parser)]
#[command(name = "funreg", version, about = "RKHS functional regression solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additional `key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic study: train/test datasets plus the oracle.
    Simulate(CommonArgs),
    /// Fit a model to a dataset CSV and write the model file.
    Fit(CommonArgs),
    /// Predict new subjects from a saved model.
    Predict(CommonArgs),
    /// Select penalties by k-fold cross-validation.
    Cv(CommonArgs),
    /// Replicated simulate/cv/fit/score benchmark.
    Bench(CommonArgs),
}

fn settings_for(args: &CommonArgs) -> anyhow::Result<Settings> {
    let mut settings = Settings::load(args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        settings.set("seed", seed.to_string());
    }
    if let Some(out) = &args.out {
        settings.set("out", out.display().to_string());
    }
    Ok(settings)
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(&settings_for(args)?),
        Command::Fit(args) => commands::cmd_fit(&settings_for(args)?),
        Command::Predict(args) => commands::cmd_predict(&settings_for(args)?),
        Command::Cv(args) => commands::cmd_cv(&settings_for(args)?),
        Command::Bench(args) => commands::cmd_bench(&settings_for(args)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let class = err
                .downcast_ref::<funreg_core::Error>()
                .map(funreg_core::Error::class)
                .unwrap_or("cli");
            eprintln!("error: class={class} message={err}");
            ExitCode::FAILURE
        }
    }
}

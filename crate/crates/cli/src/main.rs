//! `nsgmrf`: simulate, fit, cross-validate, predict, score and summarize
//! non-stationary GMRF spatial models from a TOML run configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};
use output::OutputDir;

#[derive(Parser)]
#[command(name = "nsgmrf", version, about = "Non-stationary SPDE-based GMRF spatial modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample a field and, optionally, noisy observations.
    Simulate,
    /// MAP estimate with observed-information standard deviations.
    Fit,
    /// Cross-validate the smoothing precisions.
    Cv,
    /// Predictive mean and SD rasters from a fitted model.
    Predict,
    /// Holdout CRPS and LogScore of two models.
    Score,
    /// Marginal SD and correlation-contour summaries of a fitted model.
    Summarize,
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let mut out = OutputDir::open(&cli.out)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out)?,
        Command::Fit => commands::fit(&cfg, &mut out)?,
        Command::Cv => commands::cv(&cfg, &mut out)?,
        Command::Predict => commands::predict(&cfg, &mut out)?,
        Command::Score => commands::score(&cfg, &mut out)?,
        Command::Summarize => commands::summarize(&cfg, &mut out)?,
    }
    out.validate()?;
    for p in out.written() {
        println!("{}", p.display());
    }
    out.commit();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

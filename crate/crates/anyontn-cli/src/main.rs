//! Experiment driver for the anyonic tensor network toolkit.

mod config;
mod runner;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use runner::RunContext;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "anyontn", version, about = "Ground states and dynamics of itinerant braiding anyons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// experiment configuration (strict JSON)
    #[arg(long)]
    config: PathBuf,
    /// output directory
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// override the RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// override the maximum bond dimension
    #[arg(long)]
    chi: Option<usize>,
    /// accept model files that fail algebraic verification
    #[arg(long, default_value_t = false)]
    allow_unverified: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run(CommonArgs),
    /// Run a parameter sweep (config must carry a `sweep` section).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// bounded worker pool size
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Exact diagonalization of a small finite system.
    Ed(CommonArgs),
    /// Coined quantum walk runs and sweeps.
    Qwalk(CommonArgs),
    /// Verify the algebraic consistency of a model.
    VerifyModel(CommonArgs),
    /// Resume an interrupted sweep (skips finished points).
    Resume {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn load(common: &CommonArgs) -> Result<(ExperimentConfig, RunContext)> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(chi) = common.chi {
        cfg.chi = chi;
    }
    Ok((
        cfg,
        RunContext { out_dir: common.out_dir.clone(), allow_unverified: common.allow_unverified },
    ))
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(converged) => {
            if converged {
                0
            } else {
                // distinct status for a completed but unconverged optimization
                3
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(common)
        | Command::Ed(common)
        | Command::Qwalk(common)
        | Command::VerifyModel(common) => {
            let (cfg, ctx) = load(&common)?;
            let summary = runner::run(&cfg, &ctx)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(summary.get("converged").and_then(|v| v.as_bool()).unwrap_or(true))
        }
        Command::Sweep { common, workers } | Command::Resume { common, workers } => {
            let (cfg, ctx) = load(&common)?;
            runner::sweep(&cfg, &ctx, workers)?;
            println!("sweep results in {}", ctx.out_dir.join("results.csv").display());
            Ok(true)
        }
    }
}

//! `hfprec` command-line frontend: panel ingestion, run configuration and
//! report emission around `hfprec-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{
    BenchConfig, BenchFlags, EstimateConfig, EstimateFlags, InferConfig, InferFlags, SimulateConfig, SimulateFlags,
};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hfprec", version, about = "Sparse precision matrices from high-frequency panels")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "HIFREQ_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the (factor-adjusted) weighted graphical Lasso with BIC selection.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: EstimateFlags,
    },
    /// De-biased confidence intervals for precision entries.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        estimate: EstimateFlags,
        #[command(flatten)]
        flags: InferFlags,
    },
    /// Monte Carlo study.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: SimulateFlags,
    },
    /// Solver timing table.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: BenchFlags,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Estimate { config, out, flags } => {
            let mut cfg: EstimateConfig = config::load(config.as_deref())?;
            flags.apply(&mut cfg);
            commands::estimate(&cfg, &out)
        }
        Command::Infer {
            config,
            out,
            estimate,
            flags,
        } => {
            let mut cfg: InferConfig = config::load(config.as_deref())?;
            estimate.apply(&mut cfg.estimate);
            flags.apply(&mut cfg);
            commands::infer(&cfg, &out)
        }
        Command::Simulate { config, out, flags } => {
            let mut cfg: SimulateConfig = config::load(config.as_deref())?;
            flags.apply(&mut cfg);
            commands::simulate(&cfg, &out)
        }
        Command::Bench { config, out, flags } => {
            let mut cfg: BenchConfig = config::load(config.as_deref())?;
            flags.apply(&mut cfg);
            let rows = commands::bench(&cfg, out.as_deref())?;
            println!("{:>6} {:>7} {:>12} {:>6} {:>11} {:>11}", "d", "n", "lambda", "iters", "solve_ms", "path_ms");
            for r in rows {
                println!(
                    "{:>6} {:>7} {:>12.4e} {:>6} {:>11.3} {:>11.3}",
                    r.d, r.n, r.lambda, r.iters, r.solve_ms, r.path_ms
                );
            }
            Ok(())
        }
    }
}

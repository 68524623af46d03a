//! Command-line plumbing: the JSON run configuration, the file formats the
//! subcommands exchange, and the clap argument surface.
//!
//! One config document drives the whole pipeline:
//!
//! ```text
//! detfree simulate --config run.json
//! detfree run      --config run.json --sampler detfree
//! detfree run      --config run.json --sampler cholesky
//! detfree compare  out/trace_detfree.csv out/trace_cholesky.csv
//! ```
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 I/O or file-format error.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::Result;

pub mod commands;
pub mod config;
pub mod data;

pub use commands::{build_model, cmd_compare, cmd_ess, cmd_run, cmd_simulate};
pub use config::{load_config, Family, LoadedConfig, RunConfig};
pub use data::sha256_hex;

/// Which chain driver `run` uses.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerChoice {
    /// Auxiliary-variable sampler; never factorizes or evaluates a
    /// determinant.
    Detfree,
    /// Exact-marginal baseline via dense or banded Cholesky.
    Cholesky,
}

#[derive(Parser, Debug)]
#[command(
    name = "detfree",
    version,
    about = "Determinant-free MCMC for covariance parameters of linear Gaussian models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic data files at the config's true parameter values
    Simulate {
        /// JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (1 keeps runs strictly reproducible)
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Sample one chain and write trace, metadata, and summary files
    Run {
        /// JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Chain driver
        #[arg(long, value_enum)]
        sampler: SamplerChoice,
        /// Chain seed, overriding the config's mcmc.seed
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (1 keeps runs strictly reproducible)
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output directory, overriding the config's output.directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate two traces side by side with |Δmean|/MCSE columns
    Compare {
        /// First trace CSV (the `_a` columns)
        trace_a: PathBuf,
        /// Second trace CSV (the `_b` columns)
        trace_b: PathBuf,
        /// Burn-in fraction to drop from each trace
        #[arg(long, default_value_t = 0.3)]
        burnin: f64,
        /// Also write the table as CSV to this path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize effective sample size of a trace
    Ess {
        /// Trace CSV
        trace: PathBuf,
        /// Burn-in fraction to drop
        #[arg(long, default_value_t = 0.3)]
        burnin: f64,
        /// Also write the summary as CSV to this path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sizes the global worker pool.  The row-parallel matrix kernels produce
/// bit-identical results at any width, so this only affects wall-clock;
/// the error (pool already built) is ignored because it can only happen
/// when a pool of some size exists, which is exactly as reproducible.
fn init_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global();
}

/// Executes a parsed command line.
pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, threads } => {
            init_threads(threads);
            cmd_simulate(&load_config(&config)?)
        }
        Command::Run {
            config,
            sampler,
            seed,
            threads,
            out,
        } => {
            init_threads(threads);
            cmd_run(&load_config(&config)?, sampler, seed, out.as_deref())
        }
        Command::Compare {
            trace_a,
            trace_b,
            burnin,
            out,
        } => cmd_compare(&trace_a, &trace_b, burnin, out.as_deref()),
        Command::Ess { trace, burnin, out } => cmd_ess(&trace, burnin, out.as_deref()),
    }
}

//! Command-line front end for the six-mode OPO model.
//!
//! The binary `opo` is a thin wrapper around [`run`]; everything else lives
//! here so integration tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(#[source] opo_core::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

impl From<opo_core::Error> for CliError {
    fn from(e: opo_core::Error) -> Self {
        use opo_core::Error as E;
        match e {
            E::InvalidParams(_) | E::UnsupportedRegime(_) | E::InvalidGrid(_) | E::InvalidSdeConfig(_) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Numerical(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig5,
    Fig6,
    Fig7,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the critical pump amplitude.
    Threshold,
    /// Write the data behind one figure.
    Figure {
        #[arg(value_enum)]
        id: Figure,
    },
    /// Full (θ, ω) sweep of all four operators, with minima.
    Sweep,
    /// Cross-check the model against its oracles.
    Validate,
    /// Dump drift, diffusion, covariance and eigenvalues at the working point.
    Matrices,
    /// Integrate one stochastic trajectory and dump it.
    Trajectory {
        /// Trajectory index (selects the noise stream).
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
}

#[derive(Debug, Parser)]
#[command(name = "opo", version, about = "Six-mode OPO squeezing and cluster-state spectra")]
pub struct Cli {
    /// Configuration file (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Loss rate in MHz; adds an `omega_mhz` column.
    #[arg(long, global = true)]
    pub mhz_scale: Option<f64>,
    /// Overrides `sde_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Load the configuration and apply command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.mhz_scale {
        if !(s > 0.0) {
            return Err(CliError::Usage("--mhz-scale must be positive".into()));
        }
        cfg.mhz_scale = Some(s);
    }
    if let Some(seed) = cli.seed {
        cfg.sde.seed = seed;
    }
    Ok(cfg)
}

/// Create the output directory if needed and make sure files can be written.
pub fn check_output_dir(dir: &std::path::Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(format!(".opo-write-probe-{}", std::process::id()));
    std::fs::write(&probe, b"")
        .map_err(|e| CliError::Usage(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

/// Execute one command, writing human-readable output to `out`.
pub fn run<W: Write + Send>(cli: &Cli, out: &mut W) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    check_output_dir(&cli.out)?;
    let exec = |out: &mut W| commands::dispatch(&cli.command, &cfg, &cli.out, out);
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| exec(out)),
        None => exec(out),
    }
}

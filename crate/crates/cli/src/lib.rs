//! Command-line pipelines: `solve`, `cost`, `verify`, `paper` and
//! `assumptions`, each driven by a TOML configuration and writing CSV/JSON
//! artifacts plus a `manifest.json` into the output directory.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 configuration error,
//! 3 numerical failure. Errors print as a single `error[E-CODE]: ...` line.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{RunConfig, TolOverrides};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "rfbsde",
    version,
    about = "Reflected FBSDE control: HJB solves, costs and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[arg(long = "tol.budget", global = true)]
    pub tol_budget: Option<f64>,
    #[arg(long = "tol.z", global = true)]
    pub tol_z: Option<f64>,
    #[arg(long = "tol.membership", global = true)]
    pub tol_membership: Option<f64>,
    #[arg(long = "tol.quota", global = true)]
    pub tol_quota: Option<f64>,
    #[arg(long = "tol.obstacle", global = true)]
    pub tol_obstacle: Option<f64>,
    #[arg(long = "tol.skorokhod", global = true)]
    pub tol_skorokhod: Option<f64>,
    #[arg(long = "tol.picard", global = true)]
    pub tol_picard: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the obstacle HJB; write surface, residual and feedback law.
    Solve,
    /// Estimate the cost functional at the configured point.
    Cost,
    /// Check the configured verification conditions.
    Verify,
    /// Reproduce a closed-form example end to end.
    Paper {
        /// Bundle id, e.g. `example-classical` or `example-viscosity`.
        id: String,
    },
    /// Probe the standing assumptions on a box.
    Assumptions,
}

impl Cli {
    fn tolerances(&self) -> TolOverrides {
        TolOverrides {
            budget: self.tol_budget,
            z: self.tol_z,
            membership: self.tol_membership,
            quota: self.tol_quota,
            obstacle: self.tol_obstacle,
            skorokhod: self.tol_skorokhod,
            picard: self.tol_picard,
        }
    }

    pub fn execute(&self) -> CliResult<i32> {
        if let Some(n) = self.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::config(format!("--workers: {e}")))?;
        }
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(self.seed, &self.tolerances())?;
        let out = self.out.as_path();
        match &self.command {
            Command::Solve => commands::solve(&cfg, out),
            Command::Cost => commands::cost(&cfg, out),
            Command::Verify => commands::verify(&cfg, out),
            Command::Paper { id } => commands::paper(&cfg, id, out),
            Command::Assumptions => commands::assumptions(&cfg, out),
        }
    }
}

/// Parse the command line, run, and return the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("invalid arguments");
                eprintln!("error[E-USAGE]: {}", first.trim_start_matches("error: "));
                return error::EXIT_CONFIG;
            }
            let _ = e.print();
            return error::EXIT_PASS;
        }
    };
    match cli.execute() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit
        }
    }
}

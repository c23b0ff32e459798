//! Command-line front end: run configuration, file formats and the
//! simulate / fit / compare / screen / predict commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use spikerace::mcmc::ModelKind;

pub use commands::Run;
pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "spikerace", version, about = "Fit and compare stimulus-competition models of spike trains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// competition, iigpp, wta_a or wta_b
    #[arg(long, global = true)]
    pub model: Option<String>,

    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads; defaults to the available parallelism
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Named simulation protocol for `simulate`
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Triplet JSON to analyse
    #[arg(long, global = true)]
    pub triplet: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Simulate a triplet and its ground truth
    Simulate,
    /// Fit one model and write its posterior draws
    Fit,
    /// Fit all four models and classify the triplet by WAIC
    Compare,
    /// Apply the inclusion criteria to a triplet
    Screen,
    /// Fit the competition model and summarize predictive switching
    Predict,
}

impl Cli {
    /// Config file contents with command-line flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(m) = &self.model {
            cfg.model = ModelKind::parse(m)?;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(p) = &self.preset {
            cfg.simulate.preset = Some(p.clone());
            cfg.simulate.spec = None;
        }
        if let Some(t) = &self.triplet {
            cfg.triplet = Some(t.clone());
        }
        Ok(cfg)
    }
}

/// Runs a command on a pool of the configured size and returns the files written.
pub fn execute(command: Command, cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let run = Run::new(cfg)?;
    let workers = run.cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    log::info!("running {command:?} with {workers} workers, config hash {}", run.config_hash);
    pool.install(|| match command {
        Command::Simulate => commands::simulate(&run),
        Command::Fit => commands::fit(&run),
        Command::Compare => commands::compare(&run),
        Command::Screen => commands::screen(&run),
        Command::Predict => commands::predict(&run),
    })
}

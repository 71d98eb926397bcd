//! Command-line front end for the `gpemu` toolkit.
//!
//! Every command reads a flat `key = value` config (see [`config`]) whose
//! entries can be overridden by flags; flags win.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gpemu::Error;

pub use commands::exit_code;

#[derive(Debug, Parser)]
#[command(name = "gpemu", version, about = "Two-step GP emulation of simulators with discontinuous outputs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Primary output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// synthetic2d, synthetic4d, synthetic:<D> or pool:<path>.
    #[arg(long, global = true)]
    pub simulator: Option<String>,

    /// Certainty below which the simulator answers instead of the emulator.
    #[arg(long, global = true)]
    pub fallback: Option<f64>,

    /// Number of points to generate.
    #[arg(long, global = true)]
    pub n: Option<usize>,

    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Validate the config and print the budget without running.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a labeled dataset from a simulator.
    Generate,
    /// Train a two-step emulator and write its manifest.
    Train,
    /// Predict labels and biomarker values at input points.
    Predict,
    /// Propagate input samples into a binned biomarker distribution.
    Propagate,
    /// Learning curves and the swarm-size sweep.
    Benchmark,
}

impl Cli {
    /// Flag values as config overrides, `--set` entries last.
    pub fn overrides(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        if let Some(v) = self.seed {
            out.push(("seed".into(), v.to_string()));
        }
        if let Some(v) = &self.out {
            out.push(("out".into(), v.display().to_string()));
        }
        if let Some(v) = self.threads {
            out.push(("threads".into(), v.to_string()));
        }
        if let Some(v) = &self.simulator {
            out.push(("simulator".into(), v.clone()));
        }
        if let Some(v) = self.fallback {
            out.push(("fallback".into(), v.to_string()));
        }
        if let Some(v) = self.n {
            out.push(("n".into(), v.to_string()));
        }
        for s in &self.set {
            out.push(config::parse_override(s)?);
        }
        Ok(out)
    }
}

/// Runs a parsed invocation.
pub fn run(cli: &Cli) -> Result<(), Error> {
    let file = match &cli.config {
        Some(p) => config::parse(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let mut keys = config::Keys::merge(file, cli.overrides()?);
    if let Some(t) = keys.get::<usize>("threads")? {
        if t == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        // A second build in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Generate => commands::generate(keys),
        Command::Train => commands::train(keys, cli.dry_run),
        Command::Predict => commands::predict(keys),
        Command::Propagate => commands::propagate(keys),
        Command::Benchmark => commands::benchmark(keys),
    }
}

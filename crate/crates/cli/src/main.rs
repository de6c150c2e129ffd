//! `aimrom`: simulate, sample, train, post-process, evaluate and run
//! ensembles of reduced-order models from a TOML configuration.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "aimrom", version, about = "Reduced-order models of dissipative PDEs via approximate inertial manifolds")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random stream (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a Galerkin model and write the trajectory and field.
    Simulate,
    /// Sample attractor snapshots from seeded initial conditions.
    Sample,
    /// Fit a model and add it to the model store.
    Train,
    /// Run a pipeline and write the post-processed final field.
    Postprocess,
    /// Run a pipeline and write metrics, error series and the error decomposition.
    Evaluate,
    /// Compare pipelines over seeded initial conditions.
    Ensemble,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] aimrom::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(aimrom::Error::MissingArtifact { .. }) => 4,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(aimrom::Error::Io(_)) => 1,
            CliError::Lib(_) => 2,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut config = RunConfig::load(&path).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    let out = cli.out.or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Lib(e.into()))?;
    let (name, run): (&'static str, fn(&Context) -> Result<(), CliError>) = match cli.command {
        Command::Simulate => ("simulate", commands::simulate),
        Command::Sample => ("sample", commands::sample),
        Command::Train => ("train", commands::train),
        Command::Postprocess => ("postprocess", commands::postprocess),
        Command::Evaluate => ("evaluate", commands::evaluate),
        Command::Ensemble => ("ensemble", commands::ensemble),
    };
    let ctx = Context {
        command: name,
        config,
        out,
        seed_override: cli.seed,
    };
    run(&ctx)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `gastroem` command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gastroem::Error as CoreError;

use crate::commands::Session;
use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gastroem", version, about = "Gastric slow-wave electrophysiology and electromechanics runs")]
struct Cli {
    /// TOML file overriding the defaults (and the preset, if given).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in scenario: line250, cyl250 or torus90.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Root directory for run outputs.
    #[arg(long, global = true, value_name = "DIR", env = "GASTROEM_OUT", default_value = "runs")]
    out: PathBuf,

    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the coordinate fields and write excitability, weights, diffusivities and fibers.
    Fields,
    /// Run the coupled ICC/SMC monodomain model.
    EpRun,
    /// Drive the prestressed cylinder with SMC activation.
    CoupledRun {
        /// Directory of an `ep-run`; without it the EP model is run first.
        #[arg(long, value_name = "DIR")]
        recording: Option<PathBuf>,
        /// Sweep the sweep.alpha_c x sweep.alpha_l grid on the frozen activation.
        #[arg(long)]
        sweep: bool,
    },
    /// Frequencies, conduction velocity and isochrones of an `ep-run`.
    Analyze {
        /// Directory of an `ep-run`.
        recording: PathBuf,
    },
    /// Two-probe conduction velocity over the sweep.dt_s x sweep.h_mm grid.
    Converge,
}

/// 2 for configuration errors, 3 for numerical failures, 4 for I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::InvalidArgument(_)
                | CoreError::DegenerateGeometry { .. }
                | CoreError::DegenerateDirection { .. }
                | CoreError::ConstraintConflict(_)
                | CoreError::ParameterInconsistency(_) => 2,
                CoreError::LinearSolver { .. }
                | CoreError::NonConvergence { .. }
                | CoreError::ContractionOverflow(_)
                | CoreError::EnergyOverflow(_)
                | CoreError::InvertedState(_)
                | CoreError::CollapsedRadius { .. } => 3,
                CoreError::Parse(_) | CoreError::Io(_) | CoreError::Csv(_) => 4,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return 4;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<PathBuf> {
    // analyze reuses the recording's resolved config unless told otherwise
    let recorded = match &cli.command {
        Command::Analyze { recording } if cli.config.is_none() && cli.preset.is_none() => Some(recording.join("config.toml")),
        _ => None,
    };
    let cfg = RunConfig::load(cli.preset.as_deref(), recorded.as_deref().or(cli.config.as_deref()))?;
    let ctx = Session { cfg, out_root: cli.out, threads: cli.threads.into() };
    match cli.command {
        Command::Fields => commands::fields(&ctx),
        Command::EpRun => commands::ep_run(&ctx),
        Command::CoupledRun { recording, sweep } => commands::coupled_run(&ctx, recording.as_deref(), sweep),
        Command::Analyze { recording } => commands::analyze(&ctx, &recording),
        Command::Converge => commands::converge(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("output: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

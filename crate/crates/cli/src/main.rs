mod commands;
mod spec;

use anyhow::Result;
use clap::{Parser, Subcommand};
use commands::AtStage;
use spec::{SpecArgs, DEFAULT_OUT};
use std::path::PathBuf;
use std::process::ExitCode;

/// Balanced truncation of linear systems with quadratic outputs over
/// unrestricted, time-limited and frequency-limited scenarios.
#[derive(Parser)]
#[command(name = "qomor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a system bundle.
    Gen(SpecArgs),
    /// Compute Gramians (dense) or their low-rank factors.
    Gram(SpecArgs),
    /// Reduce a system and write the ROM, σ ladder and report.
    Reduce(SpecArgs),
    /// Simulate a system and write its output trajectory.
    Simulate(SpecArgs),
    /// Compare BT against the scenario method on simulated outputs.
    Compare(SpecArgs),
    /// Normalized eigenvalue decay of a Gramian file.
    Decay {
        /// Matrix Market file holding a Gramian (or a factor with --factor).
        input: PathBuf,
        /// Treat the input as a factor Z of ZZᵀ.
        #[arg(long)]
        factor: bool,
        #[arg(long, value_name = "DIR", default_value = DEFAULT_OUT)]
        out: PathBuf,
    },
    /// Full pipeline: gen, gram, reduce and compare.
    Run(SpecArgs),
}

fn spec_of(args: SpecArgs) -> Result<spec::ExperimentSpec> {
    let spec = args.merged().at("spec")?;
    spec.validate().at("validate")?;
    Ok(spec)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => commands::gen(&spec_of(a)?).map(|_| ()),
        Command::Gram(a) => {
            let spec = spec_of(a)?;
            commands::gram(&spec, &spec.load_system().at("load")?)
        }
        Command::Reduce(a) => {
            let spec = spec_of(a)?;
            commands::reduce_cmd(&spec, &spec.load_system().at("load")?).map(|_| ())
        }
        Command::Simulate(a) => {
            let spec = spec_of(a)?;
            commands::simulate_cmd(&spec, &spec.load_system().at("load")?)
        }
        Command::Compare(a) => {
            let spec = spec_of(a)?;
            let sys = spec.load_system().at("load")?;
            let order = commands::resolve_order(&spec, &sys).at("order")?;
            commands::compare(&spec, &sys, order)
        }
        Command::Decay { input, factor, out } => commands::decay(&input, &out, factor),
        Command::Run(a) => commands::run(&spec_of(a)?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

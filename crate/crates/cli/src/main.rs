//! `qem`: run error-mitigation experiments and inspect their ingredients.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CircuitArgs, CostArgs, DecomposeArgs, Globals, GstArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qem", version, about = "Quantum error mitigation on a Pauli-transfer-matrix simulator")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; documents go to stdout when omitted (except `run`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for repetitions; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Repeated estimates of one experiment: histogram, estimates and summary.
    Run,
    /// Gate-set tomography of a simulated device.
    Gst(GstArgs),
    /// Quasi-probability decomposition of one gate.
    Decompose(DecomposeArgs),
    /// Circuit cost against qubit count.
    Cost(CostArgs),
    /// Text form of a built-in circuit.
    Circuit(CircuitArgs),
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let globals = Globals {
        config: cli.config.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        threads,
    };
    match &cli.command {
        Command::Run => commands::run(&globals),
        Command::Gst(a) => commands::gst(&globals, a),
        Command::Decompose(a) => commands::decompose_gate(&globals, a),
        Command::Cost(a) => commands::cost(&globals, a),
        Command::Circuit(a) => commands::circuit(&globals, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qem: {e}");
            if let Some(hint) = e.hint() {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

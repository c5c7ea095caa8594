//! Experiment runner for the qinstr simulator.
//!
//! Each subcommand maps one experiment family onto the library —
//! trajectories, step sweeps, process maps, circuit lowering, randomized
//! benchmarking, coherent-error amplification, and a noise-model report —
//! and emits a single self-describing record: command, artifact version,
//! seed, the fully resolved configuration, and the payload. Identical
//! invocations reproduce `config` and `payload` byte for byte; wall-clock
//! time is quarantined in its own field. Exit codes: 0 success, 2
//! configuration error, 3 numerical failure, 4 guard violation.
//! `QINSTR_THREADS` caps the worker pool.

mod amplify;
mod angle;
mod circuits;
mod common;
mod process;
mod rb;
mod record;
mod report;
mod sweep;
mod trajectory;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use common::{CliError, CliResult, CommonOpts};
use record::CommandOutput;

#[derive(Parser)]
#[command(
    name = "qinstr",
    version,
    about = "Density-matrix experiments with quantum instructions: simulate, compile, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bloch trajectories of the data and instruction qubits over N steps.
    Trajectory(trajectory::TrajectoryArgs),
    /// State fidelity versus step count N.
    SweepN(sweep::SweepArgs),
    /// Process maps versus N, with the optimal step count per instruction.
    Process(process::ProcessArgs),
    /// Lower a partial-SWAP block or a full program to the native gate set.
    Compile(circuits::CompileArgs),
    /// Single-qubit randomized benchmarking.
    Rb(rb::RbArgs),
    /// Amplify CZ phase errors by repetition.
    CzAmplify(amplify::AmplifyArgs),
    /// Print the resolved noise model and its derived rates.
    NoiseReport(report::ReportArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Trajectory(_) => "trajectory",
            Cmd::SweepN(_) => "sweep-n",
            Cmd::Process(_) => "process",
            Cmd::Compile(_) => "compile",
            Cmd::Rb(_) => "rb",
            Cmd::CzAmplify(_) => "cz-amplify",
            Cmd::NoiseReport(_) => "noise-report",
        }
    }

    fn common(&self) -> &CommonOpts {
        match self {
            Cmd::Trajectory(a) => &a.common,
            Cmd::SweepN(a) => &a.common,
            Cmd::Process(a) => &a.common,
            Cmd::Compile(a) => &a.common,
            Cmd::Rb(a) => &a.common,
            Cmd::CzAmplify(a) => &a.common,
            Cmd::NoiseReport(a) => &a.common,
        }
    }

    fn run(&self) -> CliResult<(serde_json::Value, CommandOutput)> {
        match self {
            Cmd::Trajectory(a) => trajectory::run(a),
            Cmd::SweepN(a) => sweep::run(a),
            Cmd::Process(a) => process::run(a),
            Cmd::Compile(a) => circuits::run(a),
            Cmd::Rb(a) => rb::run(a),
            Cmd::CzAmplify(a) => amplify::run(a),
            Cmd::NoiseReport(a) => report::run(a),
        }
    }
}

fn main() -> ExitCode {
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(e.code() as u8);
    }
    let cli = Cli::parse();
    let started = Instant::now();

    match execute(&cli.cmd, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

fn execute(cmd: &Cmd, started: Instant) -> CliResult<()> {
    let (config, output) = cmd.run()?;
    record::emit(cmd.name(), cmd.common().seed, config, output, started, cmd.common())
}

/// Honor `QINSTR_THREADS` before any parallel region spins up workers.
fn init_thread_pool() -> CliResult<()> {
    let Ok(raw) = std::env::var("QINSTR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("QINSTR_THREADS=`{raw}` is not a thread count")))?;
    if n == 0 {
        return Err(CliError::Config("QINSTR_THREADS must be ≥ 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

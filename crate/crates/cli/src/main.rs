//! `qis`: batch experiments on simulated quanta image sensors.
//!
//! Every command is deterministic in its flags and seed, writes its primary
//! artifact plus a `<artifact>.meta.json` sidecar, and exits with 0 on
//! success, 1 on invalid input or configuration, 2 on I/O or malformed files,
//! and 3 on numerical failure.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qis_core::QisError;

use commands::{AdaptArgs, AnalyzeArgs, BenchArgs, HdrArgs, ReconstructArgs, SimulateArgs};

#[derive(Parser, Debug)]
#[command(
    name = "qis",
    version,
    about = "Quanta image sensor simulation and threshold design",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expose an image and sample a QISB bit cube.
    Simulate(SimulateArgs),
    /// Maximum-likelihood reconstruction of a QISB bit cube.
    Reconstruct(ReconstructArgs),
    /// Adapt a threshold map by bisection or the Markov-chain baseline.
    Adapt(AdaptArgs),
    /// Analytic SNR, phase-transition, admissibility and checkerboard tables.
    Analyze(AnalyzeArgs),
    /// Multi-exposure capture, fusion and dynamic-range curves.
    Hdr(HdrArgs),
    /// Compare threshold policies over a corpus and a set of seeds.
    Bench(BenchArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Adapt(a) => commands::adapt(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Hdr(a) => commands::hdr_cmd(&a),
        Command::Bench(a) => commands::bench_cmd(&a),
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<QisError>() {
        return match e {
            QisError::Io(_) | QisError::Format(_) => EXIT_IO,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<serde_json::Error>().is_some()
    {
        return EXIT_IO;
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn later_flags_override_earlier() {
        let cli =
            Cli::try_parse_from(["qis", "simulate", "--t=5", "--t", "9", "--out", "x"]).unwrap();
        match cli.command {
            Command::Simulate(a) => assert_eq!(a.sensor.frames, 9),
            _ => unreachable!(),
        }
    }

    #[test]
    fn error_classes() {
        assert_eq!(
            exit_code(&QisError::Config("x".into()).into()),
            EXIT_VALIDATION
        );
        assert_eq!(
            exit_code(&QisError::Convergence { q: 1, z: 0.5 }.into()),
            EXIT_NUMERICAL
        );
        let io = anyhow::Error::from(QisError::Format("bad".into())).context("reading x");
        assert_eq!(exit_code(&io), EXIT_IO);
    }
}

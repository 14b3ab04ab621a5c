#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod options;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::options::{Command, ExperimentSpec, Options};

/// Threshold sampling and source coding of a Wiener process: analytics,
/// code-length optimization and Monte Carlo simulation.
#[derive(Debug, Parser)]
#[command(name = "wiener-coding", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Scheme constants, MSE and sampling rate for a codebook.
    Analyze(Options),
    /// Optimal threshold and relaxed code lengths.
    Optimize(Options),
    /// Monte Carlo estimate of MSE and sampling rate.
    Simulate(Options),
    /// Optimized, uniform and ideal schemes across a threshold grid.
    Sweep(Options),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (command, opts) = match cli.command {
        Sub::Analyze(o) => (Command::Analyze, o),
        Sub::Optimize(o) => (Command::Optimize, o),
        Sub::Simulate(o) => (Command::Simulate, o),
        Sub::Sweep(o) => (Command::Sweep, o),
    };
    match ExperimentSpec::resolve(command, opts).and_then(|s| commands::execute(&s)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

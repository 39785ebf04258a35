//! Command-line front end: file ingestion, subcommands and report rendering.

pub mod args;
pub mod commands;
pub mod dataset;

use std::io::Write;

use args::{Cli, Command};
use commands::CliError;

fn emit(output: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Output {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

/// Runs a parsed command line, writing results to stdout or the requested file.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Compute(a) => {
            let report = commands::compute(a)?;
            emit(None, &commands::render_compute(&report, a.format))
        }
        Command::Nulldist(a) => emit(a.output.as_deref(), &commands::nulldist(a)?),
        Command::Power(a) => emit(a.output.as_deref(), &commands::power(a)?),
        Command::Bench(a) => {
            let rows = commands::bench_rows(a)?;
            if let Some(slope) = commands::log_log_slope(&rows) {
                eprintln!("log-log slope of runtime vs n: {slope:.3}");
            }
            emit(a.output.as_deref(), &commands::render_bench(&rows))
        }
    }
}

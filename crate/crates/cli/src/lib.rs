//! Command-line front end for the `inertia` tool.
//!
//! Every subcommand reads the JSON/CSV inputs described in `docs/schemas.md`,
//! writes its documents into `--out-dir` and prints a short human-readable
//! summary. Exit codes: 0 success, 1 input error, 2 numerical failure,
//! 3 failed verification.

pub mod args;
pub mod commands;
pub mod io;
pub mod report;
pub mod synthetic;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;

pub use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    /// Wraps a library error, prefixing `context`.
    pub fn from_core(context: &str, e: inertia_core::Error) -> Self {
        let msg = format!("{context}: {e}");
        if e.is_input_error() {
            CliError::Input(msg)
        } else {
            CliError::Numerical(msg)
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Place(a) => commands::place(&a),
        Command::FitCapability(a) => commands::fit_capability(&a),
        Command::Verify(a) => commands::verify(&a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Command-line front end for `ivtest`: CSV ingestion, the test commands,
//! the bound calculator and Monte Carlo table replication.
//!
//! Exit codes: `0` when a result was computed (a rejection is a result),
//! `2` for usage, input or configuration errors.

pub mod args;
pub mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;

use clap::Parser;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 2;

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let raw: Vec<String> = match argv.into_iter().map(|a| a.into().into_string()).collect::<Result<Vec<_>, _>>() {
        Ok(v) => v,
        Err(bad) => {
            eprintln!("error: argument is not valid UTF-8: {bad:?}");
            return EXIT_ERROR;
        }
    };
    let expanded = match config::expand_config(raw) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_ERROR;
        }
    };
    let cli = match args::Cli::try_parse_from(expanded) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

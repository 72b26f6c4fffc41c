//! `bdk`: every experiment of the toolkit as a reproducible command.
//!
//! Each run writes its artifacts plus one `manifest-<command>.json` into the
//! output directory (`--out`, else `$BDK_OUT_DIR`, else `./bdk-out`).

use std::ffi::OsString;
use std::fmt;
use std::io;

use clap::Parser;

mod args;
mod commands;
mod context;
pub mod manifest;
pub mod output;

pub use args::{Cli, Command};
pub use context::Context;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BDK_OUT_DIR";

pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_NOT_FOUND: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Core(bdk_core::Error),
    Io(io::Error),
    Validation(String),
    Numeric(String),
    NotFound(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bdk_core::ErrorFamily;
        match self {
            CliError::Core(e) => match e.family() {
                ErrorFamily::Io => EXIT_IO,
                ErrorFamily::Validation => EXIT_VALIDATION,
                ErrorFamily::Numeric => EXIT_NUMERIC,
                ErrorFamily::NotFound => EXIT_NOT_FOUND,
            },
            CliError::Io(e) if e.kind() == io::ErrorKind::NotFound => EXIT_NOT_FOUND,
            CliError::Io(_) => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::NotFound(_) => EXIT_NOT_FOUND,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Validation(m) => write!(f, "invalid argument: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::NotFound(m) => write!(f, "not found: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bdk_core::Error> for CliError {
    fn from(e: bdk_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parse `argv`, run the command, write the manifest, return the exit code.
/// Messages go to stdout/stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut ctx = match Context::new(&cli, &argv) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("bdk: {e}");
            return e.exit_code();
        }
    };
    let result = commands::dispatch(&cli.command, &mut ctx);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bdk: {e}");
            e.exit_code()
        }
    };
    let error = result.err().map(|e| e.to_string());
    match ctx.finish(code, error) {
        Ok(path) => {
            if code == 0 {
                println!("manifest: {}", path.display());
            }
            code
        }
        Err(e) => {
            eprintln!("bdk: could not write manifest: {e}");
            if code == 0 {
                e.exit_code()
            } else {
                code
            }
        }
    }
}

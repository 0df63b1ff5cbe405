//! Command-line front end: CSV ingestion, sampler dispatch and result tables.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod error;
pub mod ingest;
pub mod output;
pub mod run;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use error::CliError;

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Execute a parsed command line.
pub fn execute(cli: &args::Cli) -> Result<(), CliError> {
    match &cli.command {
        args::Command::Run(a) => {
            let report = run::run(a)?;
            output::write_run(&mut *sink(a.data.output.as_deref())?, &report, a.data.format)
        }
        args::Command::Oracle(a) => {
            let report = run::oracle(a)?;
            output::write_oracle(&mut *sink(a.data.output.as_deref())?, &report, a.data.format)
        }
    }
}

//! `rareml`: runs the modeling pipeline from a TOML run configuration.

mod config;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pipeline::Command;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or missing prerequisite artifacts.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rareml", version, about = "Rare-event classification pipeline")]
struct Args {
    /// Stage to run; `all` runs generate through report in order.
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = config::load(&args.config, args.out, args.seed).and_then(|plan| pipeline::run(&plan, args.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Validation(_) => "invalid configuration",
                CliError::Runtime(_) => "run failed",
            };
            eprintln!("error ({kind}): {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `pwi`: generate signal sets, build and apply piecewise filters, compare
//! them with baselines and run convergence sweeps.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "pwi",
    version,
    about = "Piecewise linear interpolation filtering of large signal sets"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file of settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a reference set X and an observed set Y.
    Generate(RunConfig),
    /// Build a piecewise filter from X and Y, apply it and report errors.
    BuildApply(RunConfig),
    /// Compare the piecewise filter with baseline filters.
    Compare(RunConfig),
    /// Error and cost of the piecewise filter over several partitions.
    Converge(RunConfig),
}

/// Failure categories, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<pwi::Error> for CliError {
    fn from(e: pwi::Error) -> Self {
        let msg = e.to_string();
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else if e.is_io() {
            CliError::Io(msg)
        } else {
            CliError::Usage(msg)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => RunConfig::load_file(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Generate(flags) => commands::generate(&flags.merged_over(file)),
        Command::BuildApply(flags) => commands::build_apply(&flags.merged_over(file)),
        Command::Compare(flags) => commands::compare(&flags.merged_over(file)),
        Command::Converge(flags) => commands::converge(&flags.merged_over(file)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

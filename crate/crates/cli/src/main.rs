//! `usb` — learn drift, growth and score fields from weighted snapshot
//! data and simulate them forward, continuously or as discrete birth-death
//! trajectories.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config file, malformed inputs. Exit code 2.
    Config(String),
    /// Solver or simulation failure. Exit code 3.
    Numeric(String),
    /// Filesystem problems. Exit code 4.
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<usb_core::Error> for CliError {
    fn from(e: usb_core::Error) -> Self {
        use usb_core::Error::*;
        match e {
            Shape(m) | Parameter(m) | Format(m) => CliError::Config(m),
            Version(m) => CliError::Config(m),
            Numeric(m) => CliError::Numeric(m),
            Io(e) => CliError::Io(e.to_string()),
            Serde(e) => CliError::Config(e.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "usb", version, about = "Unbalanced Schrödinger bridge toolkit")]
struct Cli {
    /// Cap for internal worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData(commands::gen_data::Args),
    /// Compute and inspect the semi-couplings of consecutive snapshots.
    Coupling(commands::coupling::Args),
    /// Train the drift/growth/score model on a dataset.
    Train(commands::train::Args),
    /// Simulate a trained model forward.
    Simulate(commands::simulate::Args),
    /// Score a trained model against a dataset.
    Evaluate(commands::evaluate::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("config error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let file_config = match &cli.config {
        Some(path) => match config::FileConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        None => config::FileConfig::default(),
    };

    let result = match cli.command {
        Command::GenData(args) => commands::gen_data::run(args, &file_config),
        Command::Coupling(args) => commands::coupling::run(args, &file_config),
        Command::Train(args) => commands::train::run(args, &file_config),
        Command::Simulate(args) => commands::simulate::run(args, &file_config),
        Command::Evaluate(args) => commands::evaluate::run(args, &file_config),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numeric(_) => ExitCode::from(3),
                CliError::Io(_) => ExitCode::from(4),
            }
        }
    }
}

/// Writes `run.json` next to a command's outputs: resolved parameters,
/// seeds, and the library version.
pub fn write_run_json(
    out_dir: &std::path::Path,
    command: &str,
    resolved: &impl serde::Serialize,
) -> CliResult<()> {
    let run = serde_json::json!({
        "command": command,
        "version": usb_core::VERSION,
        "resolved": resolved,
    });
    let path = out_dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&run).expect("serializable") + "\n")
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &std::path::Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))
}

//! `mfgibbs` command-line front end.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{RunConfig, Settings};

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BAD: u8 = 3;
pub const EXIT_INCOMPLETE: u8 = 4;
pub const EXIT_NUMERICAL: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, kind: "config", message: message.into() }
    }
}

impl From<mfgibbs::Error> for CliError {
    fn from(e: mfgibbs::Error) -> Self {
        use mfgibbs::Error::*;
        let (code, kind) = match &e {
            NonUniqueMinimizer { .. } => (EXIT_BAD, "non_unique_minimizer"),
            NoConsistentMeasure => (EXIT_INCOMPLETE, "no_consistent_measure"),
            TruncationInsufficient { .. } | KernelRejected(_) | MarginalViolation { .. } | NumericalUnderflow(_) => {
                (EXIT_NUMERICAL, "numerical")
            }
            Io(_) => (EXIT_CONFIG, "io"),
            _ => (EXIT_CONFIG, "invalid_input"),
        };
        CliError { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_CONFIG, kind: "io", message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "mfgibbs", version, about = "Gibbsianness of transformed mean-field models")]
struct Cli {
    /// JSON config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contraction certificate (JSON)
    Certify(Settings),
    /// Multistart fixed-point search for one conditioning measure (JSON)
    FixedPoint(Settings),
    /// BAD-point scan over a tau grid (CSV)
    Scan(Settings),
    /// Finite-N exact conditionals against the limit kernel (CSV)
    Oracle(Settings),
    /// Evaluate a named closed form (JSON)
    ClosedForm(Settings),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MFG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("MFG_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

type Handler = fn(&RunConfig) -> Result<u8, CliError>;

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let (name, flags, f): (&'static str, Settings, Handler) = match cli.command {
        Command::Certify(s) => ("certify", s, commands::certify),
        Command::FixedPoint(s) => ("fixed-point", s, commands::fixed_point),
        Command::Scan(s) => ("scan", s, commands::scan),
        Command::Oracle(s) => ("oracle", s, commands::oracle),
        Command::ClosedForm(s) => ("closed-form", s, commands::closed_form),
    };
    let cfg = RunConfig::resolve(name, flags.over(file))?;
    f(&cfg)
}

fn report(err: &CliError) {
    let body = json!({
        "schema_version": 1,
        "error": { "kind": err.kind, "message": err.message },
        "exit_code": err.code,
    });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report(&CliError::config(e.to_string().trim_end()));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            report(&e);
            ExitCode::from(e.code)
        }
    }
}

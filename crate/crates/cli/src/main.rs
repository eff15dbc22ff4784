//! `funkernel` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical or
//! data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "funkernel", version, about = "Function-on-function regression with operator-valued kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth(Common),
    /// Fit a model and save it.
    Fit(Common),
    /// Cross-validate λ and kernel bandwidths.
    Cv(Common),
    /// Predict response curves for new covariates.
    Predict(Common),
    /// Score predictions against reference curves.
    Eval(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output path (directory for `synth`), overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
        }
    }
}

impl From<funkernel::Error> for CliError {
    fn from(e: funkernel::Error) -> Self {
        match e {
            funkernel::Error::InvalidConfig(_) => CliError::Config(e.to_string()),
            funkernel::Error::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type Handler = fn(&Common) -> Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (Handler, &Common) = match &cli.command {
        Command::Synth(c) => (commands::synth, c),
        Command::Fit(c) => (commands::fit, c),
        Command::Cv(c) => (commands::cv, c),
        Command::Predict(c) => (commands::predict, c),
        Command::Eval(c) => (commands::eval, c),
    };
    match run(common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

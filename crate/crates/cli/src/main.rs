mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use grantscope::collector::CollectError;
use grantscope::config::{Config, ConfigError};
use grantscope::pipeline::ScanError;
use grantscope::statestore::StoreError;
use thiserror::Error;
use tracing::error;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("collection failed: {0}")]
    Collect(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Collect(_) => 2,
            CliError::Storage(_) => 3,
        }
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Config(c) => CliError::Config(c),
            ScanError::Collect(c) => CliError::Collect(c.to_string()),
            ScanError::Store(s) => CliError::Storage(s.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Storage(e.to_string())
    }
}

impl From<CollectError> for CliError {
    fn from(e: CollectError) -> Self {
        CliError::Collect(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    match &cli.config {
        Some(path) => Ok(Config::load(path)?),
        None => Ok(Config::default()),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Scrape(a) => commands::scrape(&config, a),
        Command::Score(a) => commands::score(&config, a),
        Command::Scan(a) => commands::scan(config, a),
        Command::Analyze(a) => commands::analyze(&config, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!(error = %e, exit_code = e.exit_code(), "command failed");
            ExitCode::from(e.exit_code())
        }
    }
}

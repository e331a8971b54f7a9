use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grantscope::scorer::PromptVersion;

#[derive(Debug, Parser)]
#[command(name = "grantscope", version, about = "Audit OAuth consent grants in a Microsoft Entra tenant")]
pub struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, short, global = true, env = "GRANTSCOPE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `grantscope=debug`.
    #[arg(long, global = true, env = "RUST_LOG", default_value = "info")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the Graph permissions reference into the canonical corpus.
    Scrape(ScrapeArgs),
    /// Score corpus permissions with a language model, filling the risk cache.
    Score(ScoreArgs),
    /// Collect consents, assess risk, persist state and raise alerts.
    Scan(ScanArgs),
    /// Reports over the risk cache.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct ScrapeArgs {
    /// Markdown reference document.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Where to write the canonical JSON corpus.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Validate an existing JSON corpus instead of parsing markdown.
    #[arg(long, conflicts_with = "input")]
    pub validate: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PromptArg {
    V0,
    V1,
}

impl From<PromptArg> for PromptVersion {
    fn from(p: PromptArg) -> Self {
        match p {
            PromptArg::V0 => PromptVersion::V0,
            PromptArg::V1 => PromptVersion::V1,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model name sent to the chat endpoint
    #[arg(long)]
    pub model: Option<String>,
    /// Prompt template to score with
    #[arg(long, value_enum)]
    pub prompt_version: Option<PromptArg>,
    /// Do not retry permissions that previously exhausted their attempts.
    #[arg(long)]
    pub resume: bool,
    /// Canonical JSON corpus to score.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// SQLite risk cache
    #[arg(long)]
    pub risk_cache: Option<PathBuf>,
    /// Parallel requests in flight
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Load precomputed scores (JSON list of {permission, risk_score, reasoning}) instead of calling a model.
    #[arg(long, value_name = "FILE")]
    pub import: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Run a single cycle and exit.
    #[arg(long, conflicts_with = "interval")]
    pub once: bool,
    /// Seconds between cycles.
    #[arg(long)]
    pub interval: Option<u64>,
    /// Print webhook payloads to stdout instead of delivering them.
    #[arg(long)]
    pub dry_run: bool,
    /// Serve Graph responses from a recorded fixture directory.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// SQLite file holding scan state
    #[arg(long)]
    pub state_db: Option<PathBuf>,
    /// SQLite risk cache
    #[arg(long)]
    pub risk_cache: Option<PathBuf>,
    /// Cache model key whose scores drive the assessment.
    #[arg(long)]
    pub score_model: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// SQLite risk cache
    #[arg(long)]
    pub risk_cache: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub report: Report,
}

#[derive(Debug, Subcommand)]
pub enum Report {
    /// Per-permission mean, deviation and range across models.
    Stats {
        /// Restrict to these model keys; all models when omitted.
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Score confusion matrix between two models.
    Agreement {
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// How one model's scores moved between prompt versions.
    Transition {
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "v0")]
        from: PromptArg,
        #[arg(long, value_enum, default_value = "v1")]
        to: PromptArg,
    },
    /// Score histogram with percentages.
    Distribution {
        #[arg(long)]
        model: Option<String>,
        /// Regex over permission names, e.g. `\.All`.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Reasoning similarity between models.
    Ngrams {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
        n: u8,
    },
}

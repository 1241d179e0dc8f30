mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use absa_core::ErrorKind;
use clap::{Parser, Subcommand};

/// Unsupervised aspect-oriented opinion mining on review datasets.
#[derive(Parser, Debug)]
#[command(name = "absa", version)]
pub struct Cli {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set select.aggregation=vote`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Single seed for adaptation, fine-tuning and plans without their own seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for the experiment matrix.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Where adapted model states are stored.
    #[arg(long, env = "ABSA_MODEL_CACHE", global = true)]
    pub model_cache: Option<PathBuf>,

    /// More log output; repeat for debug level.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert SemEval XML (plus opinion annotations) into dataset JSONL.
    Prepare {
        /// Dataset name; its first letter picks the domain (L or R).
        #[arg(long)]
        name: String,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Tab-separated opinion annotations; may be repeated.
        #[arg(long)]
        opinions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip malformed items with a warning instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Masked-token domain adaptation on dataset train splits and corpus files.
    Adapt {
        /// Configured dataset names or JSONL paths.
        #[arg(long = "dataset")]
        datasets: Vec<String>,
        /// Plain-text files, one document per line.
        #[arg(long)]
        corpus: Vec<PathBuf>,
    },
    /// Run the pipeline over one dataset split and write predictions.
    Extract {
        /// Configured dataset name or JSONL path.
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// Add the aggregated per-word attention scores to every record.
        #[arg(long)]
        dump_attention: bool,
    },
    /// Score a predictions file against gold annotations.
    Evaluate {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        predictions: PathBuf,
        /// Also write the scores as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured experiment plan and render the report.
    Matrix {
        /// Extra files holding `plan.*` and `dataset.*` keys.
        plans: Vec<PathBuf>,
        #[arg(long)]
        dump_attention: bool,
    },
    /// Render the report of a finished run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 1,
        ErrorKind::Input => 2,
        ErrorKind::Capability => 3,
        ErrorKind::Internal => 4,
    }
}

/// The kind of the first library error in the chain; anything else is an
/// internal failure.
fn error_kind(err: &anyhow::Error) -> ErrorKind {
    err.chain()
        .find_map(|e| e.downcast_ref::<absa_core::Error>())
        .map(|e| e.kind())
        .unwrap_or(ErrorKind::Internal)
}

/// The error chain joined by `: `, dropping causes that an outer message
/// already quotes.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", message(&err));
            ExitCode::from(exit_code(error_kind(&err)))
        }
    }
}

//! `splitsr` command-line interface.
//!
//! Exit codes: 0 on success, 2 for bad flags or input that does not match
//! the request (missing columns, unreadable documents), 1 for anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::SearchArgs;

/// Input or flag problem reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser, Debug)]
#[command(name = "splitsr", version, about = "Symbolic regression and classification with split operators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Random seed; identical seeds give byte-identical outputs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (never changes results).
    #[arg(long, global = true, env = "SPLITSR_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a model on a CSV and write its document, renderings and metrics.
    Fit(FitArgs),
    /// Append model predictions to a CSV.
    Predict(PredictArgs),
    /// Generate synthetic clinical data or a benchmark suite.
    ScoreGen(ScoreGenArgs),
    /// Run search configurations over a directory of CSV problems.
    Bench(BenchArgs),
    /// Simplify a saved model against data.
    Simplify(SimplifyArgs),
    /// Render a saved model.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Training CSV with a header row.
    pub data: PathBuf,
    #[arg(long)]
    pub target: String,
    /// `regression` or `classification` (default: config file, then regression).
    #[arg(long)]
    pub task: Option<String>,
    /// Separate test CSV; columns are matched by name.
    #[arg(long, conflicts_with = "test_fraction")]
    pub test: Option<PathBuf>,
    /// Share of rows held out for test metrics; 0 trains on every row.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Comma-separated columns to drop before fitting.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-generation progress on stderr.
    #[arg(long)]
    pub verbose: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Name of the appended column.
    #[arg(long, default_value = "prediction")]
    pub column: String,
    /// Target column used to report the loss.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Args, Debug)]
pub struct ScoreGenArgs {
    /// `map`, `cart` or `mews`: one CSV with vitals, distractors, score and label.
    #[arg(long, required_unless_present = "suite", conflicts_with = "suite")]
    pub system: Option<String>,
    /// `clinical` (five tasks) or `physics` (six closed-form equations):
    /// a directory of problem CSVs with sidecars.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub rows: usize,
    /// Target share of positive labels (CART and MEWS only).
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub distractors: Option<usize>,
    /// Output CSV, or directory for `--suite`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Directory of problem CSVs.
    #[arg(long, required_unless_present = "regenerate")]
    pub suite: Option<PathBuf>,
    /// Comma-separated target noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub noise: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    /// JSON array of `{"name": ..., "search": {...}}`; each search object
    /// overrides the resolved base settings.
    #[arg(long)]
    pub variants: Option<PathBuf>,
    /// Add a variant without split operators.
    #[arg(long)]
    pub compare_no_splits: bool,
    /// Report directory.
    #[arg(long, required_unless_present = "regenerate")]
    pub out: Option<PathBuf>,
    /// Rebuild the summaries of an existing report directory from its run records.
    #[arg(long, conflicts_with_all = ["suite", "out"])]
    pub regenerate: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug)]
pub struct SimplifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV used to check prediction drift.
    pub data: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `json`, `infix` or `pseudocode`.
    #[arg(long, default_value = "infix")]
    pub format: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<splitsr::Error>() {
            return match e {
                splitsr::Error::MissingColumn(_)
                | splitsr::Error::NonNumeric { .. }
                | splitsr::Error::Config(_)
                | splitsr::Error::Document { .. }
                | splitsr::Error::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(g, a),
        Command::Predict(a) => commands::predict(g, a),
        Command::ScoreGen(a) => commands::score_gen(g, a),
        Command::Bench(a) => commands::bench(g, a),
        Command::Simplify(a) => commands::simplify(g, a),
        Command::Export(a) => commands::export(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

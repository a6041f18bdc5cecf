//! `shortsim`: build couples from a corpus, score representations, learn
//! importance factors and compare results.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "shortsim",
    version,
    about = "Semantic similarity experiments on very short texts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract pair and non-pair couples from a paragraph corpus.
    Extract(ExtractArgs),
    /// Compute document frequencies over the paragraphs of a corpus.
    Df(DfArgs),
    /// Score couples with each method/distance and report split error and JSD.
    Evaluate(EvaluateArgs),
    /// Learn importance factors from training couples.
    Train(TrainArgs),
    /// Merge evaluation reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Corpus: one paragraph per line, articles separated by blank lines.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Embeddings in word2vec text format; other tokens are dropped.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_words: u64,
    /// Keep at most this many pairs (and as many non-pairs).
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Also write a stratified train,test,validation split with these fractions.
    #[arg(long, value_name = "TRAIN,TEST,VALIDATION")]
    pub split: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DfArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Couples for in-sample evaluation.
    #[arg(long)]
    pub couples: Option<PathBuf>,
    /// Couples used to choose the split threshold.
    #[arg(long)]
    pub select_on: Option<PathBuf>,
    /// Couples on which the chosen threshold is measured.
    #[arg(long)]
    pub report_on: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub df: PathBuf,
    /// Learned factors, required by `mean_importance`.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, default_value = "mean")]
    pub method: String,
    /// Comma-separated distance names (`tfidf` always uses cosine).
    #[arg(long, default_value = "cosine")]
    pub distance: String,
    #[arg(long, default_value_t = shortsim::eval::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = shortsim::represent::DEFAULT_TOP_FRACTION)]
    pub top_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub couples: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub df: PathBuf,
    /// Expected fragment length; defaults to that of the first couple.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_words: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0015)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub init: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation report JSON files, or directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Extract(args) => commands::extract(&args),
        Command::Df(args) => commands::df(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Train(args) => commands::train(&args),
        Command::Report(args) => report::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace(['\n', '\r'], " "));
            ExitCode::FAILURE
        }
    }
}

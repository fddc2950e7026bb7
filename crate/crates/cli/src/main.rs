//! `evalkit`: seeded, reproducible evaluation reports from CSV files.
//!
//! Every report embeds a run manifest (arguments, resolved configuration,
//! seed, input digests), and `evalkit replay <report>` reruns it.

mod commands;
mod manifest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "evalkit", version, about = "Classifier evaluation with auditable resampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Confusion matrix and derived measures from a prediction file.
    Metrics(MetricsArgs),
    /// ROC curve, AUC with DeLong and Hanley-McNeil intervals, optimal thresholds.
    Roc(RocArgs),
    /// Cross-validation (or holdout, LOOCV, resubstitution) of a pipeline.
    Cv(CvArgs),
    /// Nested cross-validation over a hyperparameter grid.
    NestedCv(NestedCvArgs),
    /// Out-of-bag and .632 bootstrap error estimates.
    Bootstrap(BootstrapArgs),
    /// Significance test comparing two classifiers or two AUCs.
    Compare(CompareArgs),
    /// Monte Carlo studies.
    #[command(subcommand)]
    Simulate(Simulation),
    /// Write a synthetic two-Gaussian dataset with a known Bayes error.
    Generate(GenerateArgs),
    /// Rerun the command recorded in a report or manifest and check the output matches.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Input CSV file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column holding the true class.
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Column identifying independence units (subjects, sites); kept whole in every split.
    #[arg(long)]
    pub group_col: Option<String>,
    /// Positive class label. Defaults to the last label in sorted order.
    #[arg(long)]
    pub positive: Option<String>,
    /// Master seed. Required by every randomized subcommand.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread cap. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "predicted")]
    pub pred_col: String,
    /// Confidence level of the Wilson intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RocArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "score")]
    pub score_col: String,
    /// Treat lower scores as more positive.
    #[arg(long)]
    pub invert_scores: bool,
    /// Write the curve as `threshold,fpr,tpr` CSV here.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cost_fp: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cost_fn: f64,
    /// Prevalence for the cost rule. Defaults to the sample prevalence.
    #[arg(long)]
    pub prevalence: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// `gnb` or `majority`.
    #[arg(long, default_value = "gnb")]
    pub model: String,
    /// Standardize features with training-fold statistics.
    #[arg(long)]
    pub standardize: bool,
    /// Keep the k features most associated with the label (fitted per training fold).
    #[arg(long)]
    pub select_k: Option<usize>,
    /// Append this many jittered copies of each training row.
    #[arg(long)]
    pub augment_copies: Option<usize>,
    /// Fixed class priors for GNB, comma separated, in label order of first appearance.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<f64>>,
    /// Feature columns, comma separated. Defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub feature_cols: Option<Vec<String>>,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Kfold,
    Holdout,
    Loo,
    Resub,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SplitArgs {
    #[arg(long, value_enum, default_value = "kfold")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Plain (unstratified) folds.
    #[arg(long)]
    pub no_stratify: bool,
    /// Test share for `--scheme holdout`.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Use this split plan JSON instead of generating one.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Fit the preprocessing stage on all data before splitting. Produces a
    /// report watermarked INVALID and exits with status 3.
    #[arg(long)]
    pub unsafe_peeking: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    Accuracy,
    BalancedAccuracy,
    Auc,
    Mcc,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NestedCvArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// JSON array of pipeline descriptions, e.g. `[{"model":"gnb","select_k":5}]`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Shortcut grid: the base model with each of these feature-selection sizes.
    #[arg(long, value_delimiter = ',')]
    pub grid_select_k: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5)]
    pub inner_k: usize,
    #[arg(long, value_enum, default_value = "accuracy")]
    pub selection: Selection,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Mcnemar,
    Delong,
    CorrectedResampledT,
    UncorrectedResampledT,
    CorrectedRepeatedKfoldT,
    FiveByTwo,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub test: TestKind,
    /// First input: a prediction file (mcnemar), score file (delong) or cv report (t-tests).
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long, default_value = "predicted")]
    pub pred_col: String,
    #[arg(long, default_value = "score")]
    pub score_col: String,
    /// Per-fold measure the t-tests compare when reading cv reports.
    #[arg(long, default_value = "accuracy")]
    pub metric: String,
    /// CSV of per-fold differences (`repeat,fold,difference`) instead of two reports.
    #[arg(long)]
    pub diffs: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Simulation {
    /// CV versus holdout accuracy estimation on tuned Gaussian problems.
    Fig4(Fig4Args),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Fig4Args {
    #[command(flatten)]
    pub common: Common,
    /// 1000 repetitions and 10^6 external test samples.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.05)]
    pub target_error: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout_fraction: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2)]
    pub dimension: usize,
    #[arg(long, default_value_t = 0.1)]
    pub target_error: f64,
    /// Total rows, split evenly between the classes.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Group rows into subjects with this many correlated recordings each.
    #[arg(long)]
    pub recordings_per_subject: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReplayArgs {
    /// A JSON report, or the `.manifest.json` sidecar of a CSV output.
    pub report: PathBuf,
    /// Where to write the reproduced output. Defaults to `<original>.replay`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match commands::run(cli, args) {
        Ok(outcome) if outcome.valid => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

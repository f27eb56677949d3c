//! `cfx`: counterfactual detection and span extraction from the command line.
//!
//! Settings resolve as flag, then `--config` file, then built-in default.
//! Exit status is 0 on success, 2 on usage errors and 1 on data errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "cfx",
    version,
    about = "Counterfactual sentence detection and span extraction"
)]
pub struct Cli {
    /// `key = value` file; explicit flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice (splits, shuffles, init, dropout).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seeded train/validation split of a task CSV (stratified for task 1).
    Split(SplitArgs),
    /// Per-form sentence counts (if-modal, modal-if, wish, other).
    Forms(FormsArgs),
    /// Fit an n-gram vectorizer and optionally dump the feature matrix.
    Featurize(FeaturizeArgs),
    /// Train a linear classifier, optionally one per grammatical form.
    TrainLinear(TrainLinearArgs),
    /// Train the convolutional classifier over static embeddings.
    TrainCnn(TrainCnnArgs),
    /// Train antecedent and consequent CRF taggers on task-2 data.
    TrainCrf(TrainCrfArgs),
    /// Label sentences with a trained classifier; writes `id,label`.
    Predict(PredictArgs),
    /// Hard-vote several `id,label` prediction files.
    Ensemble(EnsembleArgs),
    /// Predict antecedent/consequent spans; writes the task-2 layout.
    ExtractSpans(ExtractSpansArgs),
    /// Score predictions against gold; writes a JSON report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// CoNLL-U parses keyed by `# sent_id`; supplies tokens, UPOS and heads.
    #[arg(long, value_name = "FILE")]
    pub conllu: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// Modal verb list, one per line, replacing the built-in list.
    #[arg(long, value_name = "FILE")]
    pub modal_lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Fraction of rows placed in the train file.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Stratify task-1 splits by label.
    #[arg(long)]
    pub stratified: Option<bool>,
    /// Directory for `<stem>.train.csv`, `<stem>.val.csv` and `<stem>.split.json`.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FormsArgs {
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    /// Also write the counts as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VectorizerArgs {
    /// Feature channels, comma separated: word, pos.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    #[arg(long)]
    pub ngram_min: Option<usize>,
    #[arg(long)]
    pub ngram_max: Option<usize>,
    /// Most frequent n-grams kept per (channel, n).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// binary, count or tfidf.
    #[arg(long)]
    pub weighting: Option<String>,
    #[arg(long)]
    pub keep_stopwords: Option<bool>,
    #[arg(long)]
    pub lowercase: Option<bool>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    #[command(flatten)]
    pub parse: ParseArgs,
    #[command(flatten)]
    pub vectorizer: VectorizerArgs,
    /// Fitted vectorizer artifact.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Sparse rows as JSON lines: `{"id": .., "features": [[index, value], ..]}`.
    #[arg(long, value_name = "FILE")]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLinearArgs {
    /// Task-1 CSV with gold labels.
    #[arg(long, value_name = "CSV")]
    pub train: PathBuf,
    #[command(flatten)]
    pub parse: ParseArgs,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub vectorizer: VectorizerArgs,
    /// Train one classifier per grammatical form.
    #[arg(long)]
    pub per_form: bool,
    /// none, oversample, undersample, smote or weights.
    #[arg(long)]
    pub balance: Option<String>,
    #[arg(long)]
    pub smote_k: Option<usize>,
    /// Inverse regularization strength.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// hinge or logistic.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainCnnArgs {
    /// Word vectors in text format (`word v1 v2 ...`).
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub train: PathBuf,
    /// Validation CSV used to pick the best epoch.
    #[arg(long, value_name = "CSV")]
    pub val: PathBuf,
    /// none, oversample, undersample or weights.
    #[arg(long)]
    pub balance: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub kernel_sizes: Option<Vec<usize>>,
    /// Filters per kernel size.
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainCrfArgs {
    /// Task-2 CSV with gold spans.
    #[arg(long, value_name = "CSV")]
    pub train: PathBuf,
    #[command(flatten)]
    pub parse: ParseArgs,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[arg(long)]
    pub crf_l2: Option<f64>,
    #[arg(long)]
    pub crf_lr: Option<f64>,
    #[arg(long)]
    pub crf_lr_decay: Option<f64>,
    #[arg(long)]
    pub crf_epochs: Option<usize>,
    #[arg(long)]
    pub crf_batch_size: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Artifact from train-linear or train-cnn.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// CSV with `sentence_id` and `sentence` columns.
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    #[command(flatten)]
    pub parse: ParseArgs,
    /// Word vectors; required for CNN models.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Member prediction files (`id,label`), comma separated.
    #[arg(long, value_delimiter = ',', required = true, value_name = "CSV,..")]
    pub models: Vec<PathBuf>,
    /// Fraction of positive votes needed for a positive label.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractSpansArgs {
    /// Artifact from train-crf.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Parses enable the dependency rule for "if" antecedents.
    #[command(flatten)]
    pub parse: ParseArgs,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// 1 for sentence labels, 2 for spans.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub task: u8,
    #[arg(long, value_name = "CSV")]
    pub gold: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub pred: PathBuf,
    /// JSON report path; the table always goes to stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use glassbench::evalbench::ModelKind;
use glassbench::featurize::Representation;
use glassbench::store::DatasetFormat;

use crate::config::{BaselineKind, ExplainMethod};

#[derive(Debug, Parser)]
#[command(name = "glassbench", version, about = "Simulate longitudinal microbiome data, fit glass-box and transformer classifiers, explain and evaluate them")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Output root for new artifacts.
    #[arg(long, global = true, env = "GLASSBOX_OUT", default_value = "glassbox-out")]
    pub out: PathBuf,
    /// Master seed; overrides every seed in the resolved configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. All numerics currently run on one thread.
    #[arg(long, global = true, default_value_t = 1, value_parser = positive_usize)]
    pub threads: usize,
    /// Pin manifest timestamps so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Replace an existing artifact directory.
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// Print the fully resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// TOML file with the subcommand's configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Name of the artifact directory to create under its kind's folder.
    #[arg(long, global = true)]
    pub name: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset artifact.
    Simulate(SimulateArgs),
    /// Compute a feature matrix from a dataset.
    Featurize(FeaturizeArgs),
    /// Fit a model on a dataset.
    Fit(FitArgs),
    /// Explain a fitted model.
    Explain(ExplainArgs),
    /// Run an evaluation suite.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Verify a stored artifact and regenerate its tables and figures.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of subjects.
    #[arg(long, value_parser = positive_usize)]
    pub n: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub timepoints: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub species: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub communities: Option<usize>,
    /// Array encoding: binary, csv, or both.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Dataset artifact directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// featurized or raw.
    #[arg(long)]
    pub representation: Option<Representation>,
    /// Keep original units instead of standardizing on the training split.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// majority, sparse-logistic, tree, transformer, or cbm.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// Input representation of the glass-box models.
    #[arg(long)]
    pub representation: Option<Representation>,
    /// Transformer size: desk (2 layers) or full (6 layers).
    #[arg(long, value_parser = ["desk", "full"])]
    pub preset: Option<String>,
    #[arg(long, value_parser = positive_usize)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub layers: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub heads: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Model artifact directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<ExplainMethod>,
    /// Comma-separated subject indices.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    /// Class whose log-odds are attributed.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub target: Option<u8>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineKind>,
    #[arg(long, value_parser = positive_usize)]
    pub steps: Option<usize>,
    /// Occlusion block length in time points.
    #[arg(long, value_parser = positive_usize)]
    pub window: Option<usize>,
    /// Feature name for partial dependence, e.g. `trend:d=21`.
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long, value_parser = positive_usize)]
    pub grid: Option<usize>,
    /// Hidden layer for embeddings, e.g. `block.1`.
    #[arg(long)]
    pub layer: Option<String>,
    /// Embedding pooling: mean, tokens, or species:D.
    #[arg(long)]
    pub pooling: Option<String>,
    /// Relative sparse-PCA penalty in [0, 1).
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Two subject indices whose embeddings are interpolated.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub probe: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Accuracy table over models, representations and sample sizes.
    Table1(Table1Args),
    /// Retraining ablation of integrated-gradient masks against random masks.
    Ablation(AblationArgs),
    /// Active-set overlap between independent halves.
    Stability(StabilityArgs),
    /// Attribution precision against the simulator's ground truth.
    Faithfulness(FaithfulnessArgs),
}

#[derive(Debug, Args)]
pub struct Table1Args {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long, value_delimiter = ',')]
    pub representations: Option<Vec<Representation>>,
    #[arg(long, value_parser = positive_usize)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Fraction of cells to mask.
    #[arg(long)]
    pub q: Option<f64>,
    /// Trained transformer artifact; a desk-scale model is trained when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = positive_usize)]
    pub n: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = positive_usize)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FaithfulnessArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated subjects; all validation subjects when absent.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    #[arg(long, value_parser = positive_usize)]
    pub k: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Artifact directory to verify and render.
    pub artifact: PathBuf,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: glassbench::Error| e.to_string())
}

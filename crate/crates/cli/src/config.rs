//! Resolved per-command configuration documents. Each can be loaded from a
//! TOML file (unknown keys are rejected) and is then overridden by flags.

use std::path::Path;

use clap::ValueEnum;
use glassbench::evalbench::{ModelKind, Table1Config};
use glassbench::explain::Pooling;
use glassbench::featurize::Representation;
use glassbench::glassbox::{CvOptions, TreeOptions};
use glassbench::sim::SimConfig;
use glassbench::store::DatasetFormat;
use glassbench::transformer::TransformerConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub sim: SimConfig,
    pub format: DatasetFormat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturizeConfig {
    pub representation: Representation,
    pub standardize: bool,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        Self { representation: Representation::Featurized, standardize: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub model: ModelKind,
    pub representation: Representation,
    pub cv: CvOptions,
    pub tree: TreeOptions,
    pub transformer: TransformerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::SparseLogistic,
            representation: Representation::Featurized,
            cv: CvOptions::default(),
            tree: TreeOptions::default(),
            transformer: TransformerConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMethod {
    Ig,
    Occlusion,
    Pdp,
    Embed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Zero,
    TrainMean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub method: ExplainMethod,
    /// Empty selects the first five validation subjects (attributions) or
    /// every subject (embeddings).
    pub samples: Vec<usize>,
    pub target_class: u8,
    pub baseline: BaselineKind,
    pub n_steps: usize,
    pub window: usize,
    pub feature: Option<String>,
    pub grid_points: usize,
    pub layer: Option<String>,
    pub pooling: Pooling,
    pub penalty: f64,
    pub probe: Vec<usize>,
    pub probe_points: usize,
    pub probe_k: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            method: ExplainMethod::Ig,
            samples: Vec::new(),
            target_class: 1,
            baseline: BaselineKind::Zero,
            n_steps: 64,
            window: 1,
            feature: None,
            grid_points: 20,
            layer: None,
            pooling: Pooling::Mean,
            penalty: 0.1,
            probe: Vec::new(),
            probe_points: 5,
            probe_k: 3,
        }
    }
}

pub fn parse_pooling(s: &str) -> Result<Pooling, CliError> {
    match s {
        "mean" => Ok(Pooling::Mean),
        "tokens" => Ok(Pooling::Tokens),
        _ => s
            .strip_prefix("species:")
            .and_then(|d| d.parse().ok())
            .map(Pooling::Species)
            .ok_or_else(|| CliError::Usage(format!("unknown pooling `{s}` (mean, tokens, species:D)"))),
    }
}

pub type Table1EvalConfig = Table1Config;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub sim: SimConfig,
    pub transformer: TransformerConfig,
    pub q: f64,
    pub n_steps: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), transformer: TransformerConfig::desk(), q: 0.1, n_steps: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub sim: SimConfig,
    pub seeds: Vec<u64>,
    pub cv: CvOptions,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), seeds: vec![0, 1, 2, 3], cv: CvOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaithfulnessConfig {
    pub samples: Vec<usize>,
    pub k: usize,
    pub n_steps: usize,
    pub window: usize,
}

impl Default for FaithfulnessConfig {
    fn default() -> Self {
        Self { samples: Vec::new(), k: 50, n_steps: 64, window: 1 }
    }
}

/// Fit the transformer's input, position and concept sizes to a dataset.
pub fn fit_transformer_to(config: &mut TransformerConfig, t: usize, d: usize, k: usize) {
    if config.n_embd != d {
        config.n_embd = d;
        config.mlp_width = 4 * d;
    }
    config.n_positions = t;
    config.n_concept = k;
}

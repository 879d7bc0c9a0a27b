//! Evaluation harness: accuracy table, retraining ablation, and faithfulness
//! of attributions against the simulator's ground truth.

mod ablation;
mod faithfulness;

pub use ablation::{
    apply_mask, random_mask, top_q_mask, ablation_benchmark, transformer_ablation, AblationRecord,
};
pub use faithfulness::{ground_truth_faithfulness, truth_cells, FaithfulnessReport, FaithfulnessStatus, SampleFaithfulness};

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{represent, Representation};
use crate::glassbox::{accuracy, cv_lambda_path, fit_tree, stability_overlap, Classifier, CvOptions, MajorityClass, TreeOptions};
use crate::sim::{simulate, SimConfig, SubjectDataset};
use crate::store::config_hash;
use crate::transformer::{train, Mode, TrainedTransformer, TransformerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Majority,
    SparseLogistic,
    Tree,
    Transformer,
    Cbm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Majority, ModelKind::SparseLogistic, ModelKind::Tree, ModelKind::Transformer, ModelKind::Cbm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Majority => "majority",
            ModelKind::SparseLogistic => "sparse-logistic",
            ModelKind::Tree => "tree",
            ModelKind::Transformer => "transformer",
            ModelKind::Cbm => "cbm",
        }
    }

    /// Sequence models see the raw trajectories only.
    pub fn is_sequence_model(self) -> bool {
        matches!(self, ModelKind::Transformer | ModelKind::Cbm)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = ModelKind::ALL.iter().map(|m| m.as_str()).collect();
            Error::InvalidArgument(format!("unknown model `{s}`; available: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Config {
    pub sim: SimConfig,
    pub n_list: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub representations: Vec<Representation>,
    pub cv: CvOptions,
    pub tree: TreeOptions,
    pub transformer: TransformerConfig,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            n_list: vec![500],
            models: vec![ModelKind::Majority, ModelKind::SparseLogistic, ModelKind::Tree],
            representations: vec![Representation::Featurized, Representation::Raw],
            cv: CvOptions::default(),
            tree: TreeOptions::default(),
            transformer: TransformerConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub data: String,
    pub model: String,
    pub n: usize,
    pub in_sample_acc: Option<f64>,
    pub out_sample_acc: Option<f64>,
    /// Wall-clock seconds of the fit call alone.
    pub train_time_s: Option<f64>,
    /// Active features, tree splits, or network parameters.
    pub size: Option<usize>,
    pub size_unit: String,
    pub seed: u64,
    pub config_hash: String,
    pub error: Option<String>,
}

impl Table1Row {
    fn new(data: &str, model: ModelKind, n: usize, seed: u64, hash: String) -> Self {
        Self {
            data: data.to_string(),
            model: model.as_str().to_string(),
            n,
            in_sample_acc: None,
            out_sample_acc: None,
            train_time_s: None,
            size: None,
            size_unit: String::new(),
            seed,
            config_hash: hash,
            error: None,
        }
    }

    pub fn gap(&self) -> Option<f64> {
        Some(self.in_sample_acc? - self.out_sample_acc?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub seed: u64,
    pub representation: Representation,
    pub overlap: usize,
    pub sign_agreeing: usize,
    pub active_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub machine: String,
    pub table1: Vec<Table1Row>,
    pub ablation: Vec<AblationRecord>,
    pub faithfulness: Vec<FaithfulnessReport>,
    pub stability: Vec<StabilityRow>,
}

/// OS, architecture and available parallelism, recorded alongside timings.
pub fn machine_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{} ({cpus} cpus)", std::env::consts::OS, std::env::consts::ARCH)
}

fn labels(ds: &SubjectDataset, rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&i| ds.y[i]).collect()
}

#[derive(Serialize)]
struct RowKey<'a, T: Serialize> {
    sim: &'a SimConfig,
    model: ModelKind,
    data: &'a str,
    options: &'a T,
}

/// Fit one glass-box model on one representation and score both splits.
pub fn evaluate_glassbox(ds: &SubjectDataset, model: ModelKind, rep: Representation, cv: &CvOptions, tree: &TreeOptions) -> Table1Row {
    let hash = match model {
        ModelKind::Tree => config_hash(&RowKey { sim: &ds.config, model, data: rep.as_str(), options: tree }),
        _ => config_hash(&RowKey { sim: &ds.config, model, data: rep.as_str(), options: cv }),
    };
    let mut row = Table1Row::new(rep.as_str(), model, ds.n_subjects(), ds.config.seed, hash);
    let result = (|| -> Result<(f64, f64, f64, usize, &'static str)> {
        let fm = represent::<f64>(ds, rep, true)?;
        let (tr, va) = (ds.train_indices(), ds.val_indices());
        let (xtr, xva) = (fm.select_rows(&tr).values, fm.select_rows(&va).values);
        let (ytr, yva) = (labels(ds, &tr), labels(ds, &va));
        let start = Instant::now();
        let (fitted, size, unit): (Box<dyn Classifier<f64>>, usize, &str) = match model {
            ModelKind::Majority => (Box::new(MajorityClass::fit(xtr.ncols(), &ytr)), 0, "parameters"),
            ModelKind::SparseLogistic => {
                let f = cv_lambda_path(xtr.view(), &ytr, cv)?;
                let k = f.n_active();
                (Box::new(f), k, "active features")
            }
            ModelKind::Tree => {
                let f = fit_tree(xtr.view(), &ytr, tree)?;
                let k = f.n_splits();
                (Box::new(f), k, "splits")
            }
            other => return Err(Error::InvalidArgument(format!("{} is not a glass-box model", other.as_str()))),
        };
        let secs = start.elapsed().as_secs_f64();
        Ok((fitted.accuracy(xtr.view(), &ytr)?, fitted.accuracy(xva.view(), &yva)?, secs, size, unit))
    })();
    match result {
        Ok((a_in, a_out, secs, size, unit)) => {
            row.in_sample_acc = Some(a_in);
            row.out_sample_acc = Some(a_out);
            row.train_time_s = Some(secs);
            row.size = Some(size);
            row.size_unit = unit.to_string();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Train a transformer (plain or bottleneck) on the raw trajectories.
pub fn evaluate_transformer(ds: &SubjectDataset, mode: Mode, config: &TransformerConfig) -> (Table1Row, Option<TrainedTransformer<f32>>) {
    let kind = if mode == Mode::Cbm { ModelKind::Cbm } else { ModelKind::Transformer };
    let hash = config_hash(&RowKey { sim: &ds.config, model: kind, data: "raw", options: config });
    let mut row = Table1Row::new("raw", kind, ds.n_subjects(), ds.config.seed, hash);
    let result = (|| -> Result<(f64, f64, TrainedTransformer<f32>)> {
        let trained = train::<f32>(mode, ds, config)?;
        let (tr, va) = (ds.train_indices(), ds.val_indices());
        let acc = |rows: &[usize]| -> Result<f64> {
            let p = trained.model.predict_proba_rows(ds.x.view(), rows)?;
            let pred: Vec<u8> = p.iter().map(|&q| (q > 0.5) as u8).collect();
            Ok(accuracy(&pred, &labels(ds, rows)))
        };
        Ok((acc(&tr)?, acc(&va)?, trained))
    })();
    match result {
        Ok((a_in, a_out, trained)) => {
            row.in_sample_acc = Some(a_in);
            row.out_sample_acc = Some(a_out);
            row.train_time_s = Some(trained.train_seconds);
            row.size = Some(trained.model.n_parameters());
            row.size_unit = "parameters".into();
            (row, Some(trained))
        }
        Err(e) => {
            row.error = Some(e.to_string());
            (row, None)
        }
    }
}

/// Validation accuracy of a bottleneck model when every concept logit is
/// replaced by its calibrated value under the true concept annotations.
pub fn cbm_intervention_accuracy(model: &crate::transformer::Transformer<f32>, ds: &SubjectDataset, rows: &[usize]) -> Result<f64> {
    let truth = ds.concepts.select(ndarray::Axis(0), rows);
    let overrides = model.oracle_overrides(truth.view())?;
    let z = model.intervene_concepts(ds.x.view(), rows, &overrides, &[])?;
    let pred: Vec<u8> = z.iter().map(|&v| (v > 0.0) as u8).collect();
    Ok(accuracy(&pred, &labels(ds, rows)))
}

/// Every requested model on every requested representation and sample size.
/// Model failures become rows with `error` set.
pub fn run_table1(config: &Table1Config) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for &n in &config.n_list {
        let sim = SimConfig { n_subjects: n, ..config.sim.clone() };
        let ds = simulate(&sim)?;
        for &model in &config.models {
            if model.is_sequence_model() {
                let mode = if model == ModelKind::Cbm { Mode::Cbm } else { Mode::Plain };
                rows.push(evaluate_transformer(&ds, mode, &config.transformer).0);
            } else {
                for &rep in &config.representations {
                    rows.push(evaluate_glassbox(&ds, model, rep, &config.cv, &config.tree));
                }
            }
        }
    }
    Ok(rows)
}

/// Active-set overlap between halves for each seed and representation.
pub fn run_stability(sim: &SimConfig, seeds: &[u64], cv: &CvOptions) -> Result<Vec<StabilityRow>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let ds = simulate(&SimConfig { seed, ..sim.clone() })?;
        for rep in [Representation::Featurized, Representation::Raw] {
            let r = stability_overlap::<f64>(&ds, rep, 2, &CvOptions { seed, ..*cv })?;
            out.push(StabilityRow {
                seed,
                representation: rep,
                overlap: r.overlap(),
                sign_agreeing: r.n_sign_agreeing(),
                active_sizes: r.active_sets.iter().map(Vec::len).collect(),
            });
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

/// Fixed-width table with one line per row, in the order given.
pub fn render_table1(rows: &[Table1Row], with_time: bool) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<11} {:<16} {:>7} {:>9} {:>13}", "Data", "Model", "Samples", "In-sample", "Out-of-sample");
    if with_time {
        let _ = write!(out, " {:>9}", "Time (s)");
    }
    let _ = writeln!(out, "  Size");
    for r in rows {
        let _ = write!(
            out,
            "{:<11} {:<16} {:>7} {:>9} {:>13}",
            r.data,
            r.model,
            r.n,
            opt(r.in_sample_acc.map(|a| 100.0 * a), 1),
            opt(r.out_sample_acc.map(|a| 100.0 * a), 1)
        );
        if with_time {
            let _ = write!(out, " {:>9}", opt(r.train_time_s, 2));
        }
        match (&r.error, r.size) {
            (Some(e), _) => {
                let _ = writeln!(out, "  error: {e}");
            }
            (None, Some(s)) => {
                let _ = writeln!(out, "  {s} {}", r.size_unit);
            }
            (None, None) => out.push('\n'),
        }
    }
    out
}

/// CSV of the deterministic columns (no timings).
pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut out = String::from("data,model,n,in_sample_acc,out_sample_acc,size,size_unit,seed,config_hash,error\n");
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.data,
            r.model,
            r.n,
            f(r.in_sample_acc),
            f(r.out_sample_acc),
            r.size.map(|s| s.to_string()).unwrap_or_default(),
            r.size_unit,
            r.seed,
            r.config_hash,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out
}

/// CSV of fit timings keyed like [`table1_csv`].
pub fn timings_csv(rows: &[Table1Row], machine: &str) -> String {
    let mut out = format!("# {machine}\ndata,model,n,config_hash,train_time_s\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.data, r.model, r.n, r.config_hash, r.train_time_s.map(|t| t.to_string()).unwrap_or_default());
    }
    out
}

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut out = String::from("seed,representation,overlap,sign_agreeing,active_a,active_b\n");
    for r in rows {
        let a = r.active_sizes.first().copied().unwrap_or(0);
        let b = r.active_sizes.get(1).copied().unwrap_or(0);
        let _ = writeln!(out, "{},{},{},{},{a},{b}", r.seed, r.representation.as_str(), r.overlap, r.sign_agreeing);
    }
    out
}

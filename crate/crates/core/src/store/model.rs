//! Model checkpoints.
//!
//! ```text
//! manifest.toml
//! model.json            tagged by `model`
//! training_log.csv      transformer runs: epoch,train_loss,train_accuracy,val_loss,val_accuracy
//! timings.csv           volatile: wall-clock training seconds
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_artifact, write_artifact, Artifact, ArtifactKind, ArtifactRef, Payload, WriteOptions};
use crate::error::Result;
use crate::evalbench::ModelKind;
use crate::featurize::Representation;
use crate::glassbox::{Classifier, DecisionTreeFit, MajorityClass, SparseLogisticFit};
use crate::transformer::{EpochLog, Mode, Transformer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SavedModel {
    Majority { representation: Representation, fit: MajorityClass },
    SparseLogistic { representation: Representation, fit: SparseLogisticFit<f64> },
    Tree { representation: Representation, fit: DecisionTreeFit<f64> },
    Transformer { network: Transformer<f32> },
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Majority { .. } => ModelKind::Majority,
            SavedModel::SparseLogistic { .. } => ModelKind::SparseLogistic,
            SavedModel::Tree { .. } => ModelKind::Tree,
            SavedModel::Transformer { network } => match network.mode {
                Mode::Plain => ModelKind::Transformer,
                Mode::Cbm => ModelKind::Cbm,
            },
        }
    }

    /// Input representation of the tabular models; sequence models take raw
    /// trajectories.
    pub fn representation(&self) -> Representation {
        match self {
            SavedModel::Majority { representation, .. }
            | SavedModel::SparseLogistic { representation, .. }
            | SavedModel::Tree { representation, .. } => *representation,
            SavedModel::Transformer { .. } => Representation::Raw,
        }
    }

    /// The model as a classifier over flattened feature rows.
    pub fn classifier(&self) -> &dyn Classifier<f64> {
        match self {
            SavedModel::Majority { fit, .. } => fit,
            SavedModel::SparseLogistic { fit, .. } => fit,
            SavedModel::Tree { fit, .. } => fit,
            SavedModel::Transformer { network } => network,
        }
    }

    /// `(size, unit)`: active features, splits, or parameters.
    pub fn size(&self) -> (usize, &'static str) {
        match self {
            SavedModel::Majority { .. } => (0, "parameters"),
            SavedModel::SparseLogistic { fit, .. } => (fit.n_active(), "active features"),
            SavedModel::Tree { fit, .. } => (fit.n_splits(), "splits"),
            SavedModel::Transformer { network } => (network.n_parameters(), "parameters"),
        }
    }
}

fn log_csv(log: &[EpochLog]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
    for e in log {
        let _ = writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.train_accuracy, opt(e.val_loss), opt(e.val_accuracy));
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn save_model<C: Serialize + ?Sized>(
    model: &SavedModel,
    log: Option<&[EpochLog]>,
    train_seconds: Option<f64>,
    config: &C,
    seed: u64,
    dataset: &ArtifactRef,
    dir: &Path,
    options: WriteOptions,
) -> Result<ArtifactRef> {
    let mut p = Payload::new();
    p.add("model.json", serde_json::to_vec(model)?);
    if let Some(log) = log {
        p.add("training_log.csv", log_csv(log));
    }
    if let Some(s) = train_seconds {
        p.add_volatile("timings.csv", format!("train_seconds\n{s}\n"));
    }
    write_artifact(dir, ArtifactKind::Model, config, seed, &p, std::slice::from_ref(dataset), options)
}

pub fn load_model(dir: &Path) -> Result<(SavedModel, Artifact)> {
    let a = read_artifact(dir, Some(ArtifactKind::Model))?;
    let model = serde_json::from_slice(a.file("model.json")?)?;
    Ok((model, a))
}

use std::time::Instant;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::{ConceptRange, InputScaler, Mode, Transformer, TransformerConfig};
use crate::error::{Error, Result};
use crate::metrics::percentile;
use crate::rng;
use crate::scalar::Scalar;
use crate::sim::{shuffle, SubjectDataset};
use crate::tensor::{Adam, AdamConfig, Graph, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (joint loss in bottleneck mode).
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Serialize + serde::de::DeserializeOwned")]
pub struct TrainedTransformer<S> {
    pub model: Transformer<S>,
    pub log: Vec<EpochLog>,
    pub train_seconds: f64,
}

fn bce(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Train from a fresh initialization on the dataset's training split with
/// Adam and seeded per-epoch batch permutations. Plain mode minimizes the
/// class cross-entropy; bottleneck mode adds the mean per-concept
/// cross-entropy with the class term weighted by `cbm_lambda`.
pub fn train<S: Scalar>(mode: Mode, dataset: &SubjectDataset, config: &TransformerConfig) -> Result<TrainedTransformer<S>> {
    let (_, t, d) = dataset.x.dim();
    let train_rows = dataset.train_indices();
    if train_rows.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let val_rows = dataset.val_indices();
    let mut model = Transformer::<S>::new(config.clone(), mode)?;
    model.check_input(t, d)?;
    model.scaler = InputScaler::fit(dataset.x.view(), &train_rows);
    let k = config.n_concept;
    if mode == Mode::Cbm && dataset.concepts.ncols() != k {
        return Err(Error::Dimension { expected: k, actual: dataset.concepts.ncols() });
    }

    let start = Instant::now();
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..Default::default() }, &model.params);
    let mut order_rng = rng::stream(config.seed, "transformer-batches");
    let mut order = train_rows.clone();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle(&mut order_rng, &mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let mut g = Graph::new();
            let params: Vec<Var> = model.params.bind(&mut g);
            let input = g.constant(&[rows.len(), t, d], model.batch_values(dataset.x.view(), rows)?)?;
            let trace = model.forward(&mut g, &params, input)?;
            let y: Vec<S> = rows.iter().map(|&i| S::of(dataset.y[i] as f64)).collect();
            let class_loss = g.bce_with_logits(trace.logits, &y)?;
            let loss = match (mode, trace.concept_logits) {
                (Mode::Cbm, Some(c)) => {
                    let targets: Vec<S> = rows.iter().flat_map(|&i| dataset.concepts.row(i).iter().map(|&v| S::of(v as f64)).collect::<Vec<_>>()).collect();
                    let concept_loss = g.bce_with_logits(c, &targets)?;
                    let weighted = g.scale(class_loss, config.cbm_lambda);
                    g.add(concept_loss, weighted)?
                }
                _ => class_loss,
            };
            let value = g.value(loss)[0].as_f64();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            loss_sum += value * rows.len() as f64;
            correct += g.value(trace.logits).iter().zip(rows).filter(|(z, &i)| (z.as_f64() > 0.0) == (dataset.y[i] == 1)).count();
            g.backward(loss)?;
            let grads = g.grads_of(&params);
            adam.step(&mut model.params, &grads)?;
        }
        let (val_loss, val_accuracy) = if val_rows.is_empty() {
            (None, None)
        } else {
            let z = model.logits(dataset.x.view(), &val_rows)?;
            let loss = z.iter().zip(&val_rows).map(|(z, &i)| bce(*z, dataset.y[i] as f64)).sum::<f64>() / z.len() as f64;
            let acc = z.iter().zip(&val_rows).filter(|(z, &i)| (**z > 0.0) == (dataset.y[i] == 1)).count() as f64 / z.len() as f64;
            (Some(loss), Some(acc))
        };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
            val_loss,
            val_accuracy,
        });
    }

    if mode == Mode::Cbm {
        let c = model.concept_logits(dataset.x.view(), &train_rows)?;
        let (low, high) = c
            .axis_iter(Axis(1))
            .map(|col| {
                let v = col.to_vec();
                (percentile(&v, 5.0), percentile(&v, 95.0))
            })
            .unzip();
        model.concept_range = Some(ConceptRange { low, high });
    }
    Ok(TrainedTransformer { model, log, train_seconds: start.elapsed().as_secs_f64() })
}

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Attribution;
use crate::metrics::spearman;
use crate::sim::{Kind, SubjectDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaithfulnessStatus {
    Scored,
    /// No subject has any ground-truth cell, so nothing can be scored.
    NoSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFaithfulness {
    pub sample: usize,
    pub n_truth: usize,
    pub precision_at_k: Option<f64>,
    pub rank_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub status: FaithfulnessStatus,
    pub k: usize,
    pub n_samples: usize,
    /// Mean precision at `k` over samples with at least one truth cell.
    pub precision_at_k: Option<f64>,
    /// Mean fraction of cells that are truth cells, over the same samples.
    pub base_rate: Option<f64>,
    /// Mean Spearman correlation between attributions and occlusion drops.
    pub rank_correlation: Option<f64>,
    pub per_sample: Vec<SampleFaithfulness>,
}

/// `T × D` mask of the cells that carry signal for subject `i`: every time
/// point of monotone columns and the window around each bloom, in
/// communities whose mixture weight exceeds the concept threshold.
pub fn truth_cells(dataset: &SubjectDataset, i: usize) -> Result<Array2<bool>> {
    let truth = dataset.truth.as_ref().ok_or(Error::MissingTruth)?;
    if i >= dataset.n_subjects() {
        return Err(Error::OutOfRange { index: i, len: dataset.n_subjects() });
    }
    let (t_n, d_n) = (dataset.n_timepoints(), dataset.n_species());
    let half = dataset.config.tukey_window / 2;
    let dict = &truth.dictionary;
    let mut mask = Array2::from_elem((t_n, d_n), false);
    for c in 0..dict.n_communities() {
        if truth.theta[[i, c]] <= dataset.config.concept_threshold {
            continue;
        }
        for d in 0..d_n {
            match dict.kinds[[c, d]] {
                Kind::Noise => {}
                Kind::Increase | Kind::Decrease => mask.column_mut(d).fill(true),
                Kind::Bloom => {
                    for b in dict.bloom_centers.iter().filter(|b| b.community == c && b.species == d) {
                        for t in b.time.saturating_sub(half)..=(b.time + half).min(t_n - 1) {
                            mask[[t, d]] = true;
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Indices (flattened) of the `k` largest `|values|`, ties by position.
fn top_k(values: &Array2<f64>, k: usize) -> Vec<usize> {
    let flat: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut idx: Vec<usize> = (0..flat.len()).collect();
    idx.sort_by(|&a, &b| flat[b].total_cmp(&flat[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Precision at `k` of the top-|attribution| cells against the truth cells,
/// and rank agreement with occlusion drops when those are given (matched by
/// sample id).
pub fn ground_truth_faithfulness(
    attributions: &[Attribution],
    dataset: &SubjectDataset,
    occlusions: Option<&[Attribution]>,
    k: usize,
) -> Result<FaithfulnessReport> {
    if dataset.truth.is_none() {
        return Err(Error::MissingTruth);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let mut per_sample = Vec::with_capacity(attributions.len());
    let (mut prec, mut base, mut corr) = (Vec::new(), Vec::new(), Vec::new());
    for a in attributions {
        let mask = truth_cells(dataset, a.sample)?;
        if a.values.dim() != mask.dim() {
            return Err(Error::shape("ground_truth_faithfulness", "attribution does not match the data shape"));
        }
        let n_truth = mask.iter().filter(|m| **m).count();
        let precision = (n_truth > 0).then(|| {
            let flat: Vec<bool> = mask.iter().copied().collect();
            let hits = top_k(&a.values, k).into_iter().filter(|&j| flat[j]).count();
            hits as f64 / k.min(flat.len()) as f64
        });
        if let Some(p) = precision {
            prec.push(p);
            base.push(n_truth as f64 / mask.len() as f64);
        }
        let rank_correlation = match occlusions.and_then(|o| o.iter().find(|o| o.sample == a.sample)) {
            Some(o) => {
                let u: Vec<f64> = a.values.iter().copied().collect();
                let v: Vec<f64> = o.values.iter().copied().collect();
                if u.len() != v.len() {
                    return Err(Error::shape("ground_truth_faithfulness", "occlusion does not match the attribution shape"));
                }
                spearman(&u, &v)
            }
            None => None,
        };
        if let Some(r) = rank_correlation {
            corr.push(r);
        }
        per_sample.push(SampleFaithfulness { sample: a.sample, n_truth, precision_at_k: precision, rank_correlation });
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let status = if prec.is_empty() { FaithfulnessStatus::NoSignal } else { FaithfulnessStatus::Scored };
    Ok(FaithfulnessReport {
        status,
        k,
        n_samples: attributions.len(),
        precision_at_k: mean(&prec),
        base_rate: mean(&base),
        rank_correlation: mean(&corr),
        per_sample,
    })
}

//! Agreement of sparse-logistic active sets fitted on disjoint subsets.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::logistic::{cv_lambda_path, CvOptions, SparseLogisticFit};
use crate::error::{Error, Result};
use crate::featurize::{represent, Representation};
use crate::rng;
use crate::scalar::Scalar;
use crate::sim::{shuffle, SubjectDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Sorted active features of each part's fit.
    pub active_sets: Vec<Vec<usize>>,
    /// Features active in every part.
    pub intersection: Vec<usize>,
    /// For each feature in `intersection`, whether all fits agree on its sign.
    pub sign_agreement: Vec<bool>,
    pub lambdas: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl StabilityReport {
    pub fn overlap(&self) -> usize {
        self.intersection.len()
    }

    pub fn n_sign_agreeing(&self) -> usize {
        self.sign_agreement.iter().filter(|b| **b).count()
    }

    fn from_fits<S: Scalar>(fits: &[SparseLogisticFit<S>], feature_names: Vec<String>) -> Self {
        let active_sets: Vec<Vec<usize>> = fits.iter().map(|f| f.active_set.clone()).collect();
        let intersection: Vec<usize> = active_sets[0]
            .iter()
            .copied()
            .filter(|j| active_sets[1..].iter().all(|s| s.binary_search(j).is_ok()))
            .collect();
        let sign_agreement = intersection
            .iter()
            .map(|&j| {
                let s0 = fits[0].beta[j] > S::zero();
                fits[1..].iter().all(|f| (f.beta[j] > S::zero()) == s0)
            })
            .collect();
        StabilityReport {
            active_sets,
            intersection,
            sign_agreement,
            lambdas: fits.iter().map(|f| f.lambda.as_f64()).collect(),
            feature_names,
        }
    }
}

/// Fit the cross-validated path on two already-prepared halves.
pub fn stability_overlap_halves<S: Scalar>(
    a: (ArrayView2<'_, S>, &[u8]),
    b: (ArrayView2<'_, S>, &[u8]),
    opts: &CvOptions,
) -> Result<StabilityReport> {
    let fa = cv_lambda_path(a.0, a.1, opts)?;
    let fb = cv_lambda_path(b.0, b.1, opts)?;
    Ok(StabilityReport::from_fits(&[fa, fb], Vec::new()))
}

/// Split all subjects into `n_splits` disjoint class-stratified parts, build
/// `representation` within each part (standardized on that part alone), fit
/// the cross-validated path on each and compare active sets.
pub fn stability_overlap<S: Scalar>(
    dataset: &SubjectDataset,
    representation: Representation,
    n_splits: usize,
    opts: &CvOptions,
) -> Result<StabilityReport> {
    if n_splits < 2 || dataset.n_subjects() < n_splits * 2 * opts.n_folds {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} subjects into {n_splits} parts",
            dataset.n_subjects()
        )));
    }
    let mut r = rng::stream(opts.seed, "stability");
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n_splits];
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..dataset.n_subjects()).filter(|&i| dataset.y[i] == class).collect();
        shuffle(&mut r, &mut idx);
        for (k, i) in idx.into_iter().enumerate() {
            parts[k % n_splits].push(i);
        }
    }
    let mut fits = Vec::with_capacity(n_splits);
    let mut names = Vec::new();
    for part in &mut parts {
        part.sort_unstable();
        let sub = dataset.subset(part);
        let fm = represent::<S>(&sub, representation, false)?;
        let all: Vec<usize> = (0..fm.n_rows()).collect();
        let fm = fm.standardized(&all);
        fits.push(cv_lambda_path(fm.values.view(), &sub.y, opts)?);
        names = fm.feature_names;
    }
    Ok(StabilityReport::from_fits(&fits, names))
}

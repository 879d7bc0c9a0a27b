//! Intrinsically interpretable classifiers.

mod logistic;
mod stability;
mod tree;

pub use logistic::{
    cv_lambda_path, fit_sparse_logistic, lambda_grid, lambda_max, stratified_folds, CvOptions, CvPoint,
    LogisticOptions, PathPoint, SparseLogisticFit,
};
pub use stability::{stability_overlap, stability_overlap_halves, StabilityReport};
pub use tree::{fit_tree, DecisionTreeFit, Node, SplitCriterion, TreeOptions};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform prediction contract over feature rows.
pub trait Classifier<S: Scalar> {
    fn n_features(&self) -> usize;

    /// Probability of class 1 for each row.
    fn predict_proba(&self, x: ArrayView2<'_, S>) -> Result<Vec<S>>;

    fn predict(&self, x: ArrayView2<'_, S>) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| (p > S::of(0.5)) as u8)
            .collect())
    }

    fn accuracy(&self, x: ArrayView2<'_, S>, y: &[u8]) -> Result<f64> {
        Ok(accuracy(&self.predict(x)?, y))
    }
}

pub(crate) fn check_width(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

pub fn accuracy(pred: &[u8], y: &[u8]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// Predicts the training prevalence of class 1 for every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityClass {
    pub n_features: usize,
    pub p_disease: f64,
}

impl MajorityClass {
    pub fn fit(n_features: usize, y: &[u8]) -> Self {
        let p = y.iter().map(|&v| v as f64).sum::<f64>() / y.len().max(1) as f64;
        Self { n_features, p_disease: p }
    }
}

impl<S: Scalar> Classifier<S> for MajorityClass {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: ArrayView2<'_, S>) -> Result<Vec<S>> {
        check_width(self.n_features, x.ncols())?;
        Ok(vec![S::of(self.p_disease); x.nrows()])
    }
}

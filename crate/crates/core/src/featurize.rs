//! Input representations: concatenated raw time points and per-species
//! trend/curvature summaries.
//!
//! Indices in feature names are zero-based: `raw:t=17:d=3`, `trend:d=3`,
//! `curv:d=3`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::SubjectDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Raw,
    Featurized,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Featurized => "featurized",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "original" => Ok(Representation::Raw),
            "featurized" => Ok(Representation::Featurized),
            other => Err(Error::InvalidArgument(format!(
                "unknown representation `{other}` (expected raw or featurized)"
            ))),
        }
    }
}

/// How the curvature summary differences the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMode {
    /// `(x[t+1] - x[t-1])^2`
    #[default]
    Central,
    /// `(x[t+1] - 2 x[t] + x[t-1])^2`
    SecondDifference,
}

/// Per-column affine standardization fitted on a subset of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
    /// Columns with zero spread on the fitting rows; they standardize to 0.
    pub zero_variance: Vec<bool>,
}

impl<S: Scalar> Standardization<S> {
    /// Fit population mean and standard deviation on `rows` of `values`.
    pub fn fit(values: ArrayView2<'_, S>, rows: &[usize]) -> Self {
        let p = values.ncols();
        let n = rows.len().max(1) as f64;
        let mut mean = Vec::with_capacity(p);
        let mut std = Vec::with_capacity(p);
        let mut zero_variance = Vec::with_capacity(p);
        for j in 0..p {
            let col = values.column(j);
            let m = rows.iter().map(|&i| col[i].as_f64()).sum::<f64>() / n;
            let v = rows.iter().map(|&i| (col[i].as_f64() - m).powi(2)).sum::<f64>() / n;
            let sd = v.sqrt();
            let degenerate = !(sd > f64::EPSILON * m.abs()) || sd == 0.0;
            mean.push(S::of(m));
            std.push(S::of(if degenerate { 1.0 } else { sd }));
            zero_variance.push(degenerate);
        }
        Self { mean, std, zero_variance }
    }

    pub fn apply(&self, values: ArrayView2<'_, S>) -> Result<Array2<S>> {
        if values.ncols() != self.mean.len() {
            return Err(Error::Dimension { expected: self.mean.len(), actual: values.ncols() });
        }
        let mut out = values.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.zero_variance[j] {
                col.fill(S::zero());
            } else {
                col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
            }
        }
        Ok(out)
    }

    /// Map standardized values back to original units. Zero-variance columns
    /// return their mean.
    pub fn invert(&self, values: ArrayView2<'_, S>) -> Array2<S> {
        let mut out = values.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.zero_variance[j] {
                col.fill(self.mean[j]);
            } else {
                col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<S> {
    /// `N × P` values.
    pub values: Array2<S>,
    pub feature_names: Vec<String>,
    pub representation: Representation,
    /// Present when `values` are standardized.
    pub standardization: Option<Standardization<S>>,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Standardize every row with parameters fitted on `fit_rows` only.
    /// Re-standardizing an already standardized matrix first undoes the
    /// stored transform, so the operation is idempotent.
    pub fn standardized(&self, fit_rows: &[usize]) -> FeatureMatrix<S> {
        let raw = match &self.standardization {
            Some(s) => s.invert(self.values.view()),
            None => self.values.clone(),
        };
        let st = Standardization::fit(raw.view(), fit_rows);
        let values = st.apply(raw.view()).expect("same width");
        FeatureMatrix {
            values,
            feature_names: self.feature_names.clone(),
            representation: self.representation,
            standardization: Some(st),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix<S> {
        FeatureMatrix {
            values: self.values.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            representation: self.representation,
            standardization: self.standardization.clone(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

/// Row `i` is subject `i` flattened time-major: column `t * D + d`.
pub fn concat_raw<S: Scalar>(dataset: &SubjectDataset) -> FeatureMatrix<S> {
    let (n, t_n, d_n) = dataset.x.dim();
    let values = dataset
        .x
        .mapv(S::of)
        .into_shape_with_order((n, t_n * d_n))
        .expect("contiguous");
    let mut names = Vec::with_capacity(t_n * d_n);
    for t in 0..t_n {
        for d in 0..d_n {
            names.push(format!("raw:t={t}:d={d}"));
        }
    }
    FeatureMatrix { values, feature_names: names, representation: Representation::Raw, standardization: None }
}

/// Undo [`concat_raw`] for one row.
pub fn unflatten_raw<S: Scalar>(row: &[S], n_timepoints: usize, n_species: usize) -> Result<Array2<S>> {
    Array2::from_shape_vec((n_timepoints, n_species), row.to_vec())
        .map_err(|e| Error::shape("unflatten_raw", e.to_string()))
}

/// Ordinary least squares slope of `x` against `t = 1..=T`.
pub fn trend_feature<S: Scalar>(x: &[S]) -> S {
    let n = x.len() as f64;
    let t_mean = (n + 1.0) / 2.0;
    let x_mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in x.iter().enumerate() {
        let dt = (i + 1) as f64 - t_mean;
        sxy += dt * (v.as_f64() - x_mean);
        sxx += dt * dt;
    }
    S::of(sxy / sxx)
}

/// Mean squared difference over interior time points, `1/(T-2) Σ_{t=2}^{T-1}`.
pub fn curvature_feature<S: Scalar>(x: &[S], mode: CurvatureMode) -> S {
    let n = x.len();
    let mut acc = 0.0;
    for t in 1..n - 1 {
        let diff = match mode {
            CurvatureMode::Central => x[t + 1].as_f64() - x[t - 1].as_f64(),
            CurvatureMode::SecondDifference => {
                x[t + 1].as_f64() - 2.0 * x[t].as_f64() + x[t - 1].as_f64()
            }
        };
        acc += diff * diff;
    }
    S::of(acc / (n - 2) as f64)
}

/// Trend and curvature per species, unstandardized. Columns are
/// `trend:d=0..D` followed by `curv:d=0..D`.
pub fn summarize_unstandardized<S: Scalar>(dataset: &SubjectDataset, mode: CurvatureMode) -> Result<FeatureMatrix<S>> {
    let (n, t_n, d_n) = dataset.x.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if t_n < 3 {
        return Err(Error::InvalidArgument("summaries need at least 3 time points".into()));
    }
    let mut values = Array2::<S>::zeros((n, 2 * d_n));
    let mut series = vec![S::zero(); t_n];
    for i in 0..n {
        for d in 0..d_n {
            for t in 0..t_n {
                series[t] = S::of(dataset.x[[i, t, d]]);
            }
            values[[i, d]] = trend_feature(&series);
            values[[i, d_n + d]] = curvature_feature(&series, mode);
        }
    }
    let names = (0..d_n)
        .map(|d| format!("trend:d={d}"))
        .chain((0..d_n).map(|d| format!("curv:d={d}")))
        .collect();
    Ok(FeatureMatrix { values, feature_names: names, representation: Representation::Featurized, standardization: None })
}

/// Summaries standardized on the dataset's training split.
pub fn summarize<S: Scalar>(dataset: &SubjectDataset) -> Result<FeatureMatrix<S>> {
    let raw = summarize_unstandardized(dataset, CurvatureMode::Central)?;
    Ok(raw.standardized(&dataset.train_indices()))
}

/// Build the requested representation; `standardize` fits on the training split.
pub fn represent<S: Scalar>(dataset: &SubjectDataset, representation: Representation, standardize: bool) -> Result<FeatureMatrix<S>> {
    let fm = match representation {
        Representation::Raw => concat_raw(dataset),
        Representation::Featurized => summarize_unstandardized(dataset, CurvatureMode::Central)?,
    };
    Ok(if standardize { fm.standardized(&dataset.train_indices()) } else { fm })
}

//! Post-hoc explanations: partial dependence, embeddings, attributions.

mod attribution;
mod embed;
mod pca;
pub mod svg;

pub use attribution::{
    cell_importance, integrated_gradients, model_input, occlusion, Attribution, AttributionMethod, Baseline,
    Differentiable, LinearLogit,
};
pub use embed::{default_layer, extract_embeddings, interpolation_probe, EmbeddingSet, Pooling, ProbePoint};
pub use pca::{sparse_pca, SparsePca};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glassbox::Classifier;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpProfile {
    pub feature: usize,
    pub feature_name: Option<String>,
    pub grid: Vec<f64>,
    /// Mean predicted probability of class 1 at each grid value.
    pub profile: Vec<f64>,
}

impl PdpProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,profile\n");
        for (g, p) in self.grid.iter().zip(&self.profile) {
            out.push_str(&format!("{g},{p}\n"));
        }
        out
    }
}

/// Partial dependence of `model` on feature `d`: for each grid value, the
/// mean prediction over all rows of `x` with column `d` overwritten.
pub fn pdp<S: Scalar, C: Classifier<S> + ?Sized>(model: &C, x: ArrayView2<'_, S>, d: usize, grid: &[S]) -> Result<PdpProfile> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty PDP grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("PDP grid must be strictly increasing".into()));
    }
    if d >= x.ncols() {
        return Err(Error::OutOfRange { index: d, len: x.ncols() });
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("PDP needs at least one row".into()));
    }
    let mut work = x.to_owned();
    let mut profile = Vec::with_capacity(grid.len());
    for &v in grid {
        work.column_mut(d).fill(v);
        let p = model.predict_proba(work.view())?;
        profile.push(p.iter().map(|q| q.as_f64()).sum::<f64>() / p.len() as f64);
    }
    Ok(PdpProfile { feature: d, feature_name: None, grid: grid.iter().map(|g| g.as_f64()).collect(), profile })
}

/// `g` distinct, evenly spaced quantiles of column `d` (fewer if the column has
/// fewer distinct values).
pub fn quantile_grid<S: Scalar>(x: ArrayView2<'_, S>, d: usize, g: usize) -> Result<Vec<S>> {
    if d >= x.ncols() {
        return Err(Error::OutOfRange { index: d, len: x.ncols() });
    }
    let col: Vec<f64> = x.column(d).iter().map(|v| v.as_f64()).collect();
    if col.is_empty() || g == 0 {
        return Err(Error::InvalidArgument("quantile grid needs rows and g > 0".into()));
    }
    let mut grid: Vec<f64> = (0..g)
        .map(|i| crate::metrics::percentile(&col, if g == 1 { 50.0 } else { 100.0 * i as f64 / (g - 1) as f64 }))
        .collect();
    grid.dedup_by(|a, b| a <= b);
    Ok(grid.into_iter().map(S::of).collect())
}

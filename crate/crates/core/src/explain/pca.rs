use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOL: f64 = 1e-6;
const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsePca {
    pub penalty: f64,
    /// Column means removed before projecting.
    pub mean: Vec<f64>,
    /// `E × n_components`, unit-norm columns.
    pub loadings: Array2<f64>,
    /// `N × n_components`.
    pub scores: Array2<f64>,
    /// Variance captured by each component on the deflated covariance.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// Fraction of loading entries that are exactly zero.
    pub loadings_sparsity: f64,
    pub iterations: Vec<usize>,
}

impl SparsePca {
    /// Scores of new rows.
    pub fn transform(&self, vectors: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if vectors.ncols() != self.mean.len() {
            return Err(Error::Dimension { expected: self.mean.len(), actual: vectors.ncols() });
        }
        let centered = &vectors - &Array1::from(self.mean.clone());
        Ok(centered.dot(&self.loadings))
    }
}

fn soft_threshold(u: &mut [f64], penalty: f64) {
    let cut = penalty * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in u.iter_mut() {
        *v = v.signum() * (v.abs() - cut).max(0.0);
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

/// Sparse principal directions by soft-thresholded power iteration on the
/// centered covariance, with deflation by projection removal.
///
/// `penalty` in `[0, 1)` is relative: each iteration zeroes entries of `Cv`
/// smaller than `penalty · max|Cv|` and shrinks the rest by that amount.
pub fn sparse_pca(vectors: ArrayView2<'_, f64>, n_components: usize, penalty: f64) -> Result<SparsePca> {
    let (n, e) = vectors.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("sparse PCA needs at least 2 rows, got {n}")));
    }
    if n_components == 0 || n_components > e {
        return Err(Error::InvalidArgument(format!("n_components must be in 1..={e}")));
    }
    if !(0.0..1.0).contains(&penalty) {
        return Err(Error::InvalidArgument(format!("penalty {penalty} must be in [0, 1)")));
    }
    let mean = vectors.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &vectors - &mean;
    let mut cov = centered.t().dot(&centered) / (n - 1) as f64;
    let total = cov.diag().sum();
    let scale = vectors.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if !(total > 1e-24 * scale * scale) {
        return Err(Error::DegenerateCovariance);
    }

    let mut loadings = Array2::zeros((e, n_components));
    let mut explained = Vec::with_capacity(n_components);
    let mut iterations = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let remaining = cov.diag().sum();
        let mut v: Vec<f64>;
        let mut iters = 0;
        if remaining <= 1e-12 * total {
            // nothing left to explain: any unit vector orthogonal to the previous loadings
            v = orthogonal_unit(&loadings, c);
        } else {
            let start: Array1<f64> = (0..e).map(|j| 1.0 + j as f64 / e as f64).collect();
            v = cov.dot(&start).to_vec();
            if !normalize(&mut v) {
                v = orthogonal_unit(&loadings, c);
            }
            loop {
                iters += 1;
                let mut u = cov.dot(&Array1::from(v.clone())).to_vec();
                soft_threshold(&mut u, penalty);
                if !normalize(&mut u) {
                    break;
                }
                let change = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                v = u;
                if change < TOL || iters >= MAX_ITER {
                    break;
                }
            }
        }
        // sign convention: largest-magnitude entry positive
        let lead = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let va = Array1::from(v);
        explained.push(va.dot(&cov.dot(&va)).max(0.0));
        iterations.push(iters);
        // deflate: C <- (I - vv')C(I - vv')
        let cv = cov.dot(&va);
        let vcv = va.dot(&cv);
        let outer = |a: &Array1<f64>, b: &Array1<f64>| {
            a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
        };
        cov = &cov - &outer(&va, &cv) - &outer(&cv, &va) + &(outer(&va, &va) * vcv);
        loadings.column_mut(c).assign(&va);
    }
    let zeros = loadings.iter().filter(|v| **v == 0.0).count();
    let scores = centered.dot(&loadings);
    Ok(SparsePca {
        penalty,
        mean: mean.to_vec(),
        loadings_sparsity: zeros as f64 / loadings.len() as f64,
        loadings,
        scores,
        explained_variance: explained,
        total_variance: total,
        iterations,
    })
}

fn orthogonal_unit(loadings: &Array2<f64>, c: usize) -> Vec<f64> {
    let e = loadings.nrows();
    for j in 0..e {
        let mut v = vec![0.0; e];
        v[j] = 1.0;
        for k in 0..c {
            let col = loadings.column(k);
            let dot: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(col).for_each(|(x, l)| *x -= dot * l);
        }
        if normalize(&mut v) {
            return v;
        }
    }
    unreachable!("fewer components than dimensions")
}

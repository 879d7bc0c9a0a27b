//! L1-penalized logistic regression by cyclic coordinate descent.
//!
//! Minimizes `Σ_i log(1 + exp(-y_i (b0 + x_i·β))) + λ‖β‖₁` with labels coded
//! `±1` and an unpenalized intercept. Each outer iteration forms the weighted
//! least-squares approximation of the log-likelihood at the current iterate
//! and solves its penalized version by coordinate descent over the active set,
//! with a full sweep to confirm the active set before leaving the inner loop.
//! Iteration stops once no coefficient moves by more than `tol` across an
//! outer iteration, or after `max_sweeps` coordinate sweeps in total.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_width, Classifier};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the quadratic
/// approximation so weights never vanish.
const PROB_EPS: f64 = 1e-5;
/// Relative slack on the zero test so roundoff at exactly `lambda_max` keeps β = 0.
const THRESHOLD_SLACK: f64 = 1e-10;

/// A path stops once this fraction of the null deviance is explained.
const MAX_DEVIANCE_RATIO: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint<S> {
    pub lambda: S,
    pub intercept: S,
    /// Nonzero coefficients as `(feature, value)`.
    pub coefficients: Vec<(usize, S)>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_accuracy: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLogisticFit<S> {
    pub beta: Vec<S>,
    pub intercept: S,
    pub lambda: S,
    /// Descending λ values with the warm-started fit at each.
    pub lambda_path: Vec<PathPoint<S>>,
    /// Cross-validated accuracy per `lambda_path` entry; empty for single fits.
    pub cv_curve: Vec<CvPoint>,
    pub active_set: Vec<usize>,
    pub converged: bool,
    pub sweeps: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl<S: Scalar> SparseLogisticFit<S> {
    fn from_state(state: &State, lambda: f64, converged: bool, sweeps: usize) -> Self {
        let beta: Vec<S> = state.beta.iter().map(|&b| S::of(b)).collect();
        let active_set = active(&state.beta);
        Self {
            intercept: S::of(state.b0),
            lambda: S::of(lambda),
            lambda_path: vec![path_point(state, lambda, converged)],
            cv_curve: Vec::new(),
            active_set,
            converged,
            sweeps,
            beta,
            feature_names: Vec::new(),
        }
    }

    pub fn n_active(&self) -> usize {
        self.active_set.len()
    }

    /// Linear predictor `b0 + x·β` per row.
    pub fn decision_function(&self, x: ArrayView2<'_, S>) -> Result<Vec<S>> {
        check_width(self.beta.len(), x.ncols())?;
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                let z: f64 = self.active_set.iter().map(|&j| row[j].as_f64() * self.beta[j].as_f64()).sum();
                S::of(z + self.intercept.as_f64())
            })
            .collect())
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }

    /// A fixed model with the given coefficients, outside any fitting path.
    pub fn from_coefficients(beta: Vec<S>, intercept: S) -> Self {
        let active_set = beta.iter().enumerate().filter(|(_, b)| **b != S::zero()).map(|(j, _)| j).collect();
        Self {
            beta,
            intercept,
            lambda: S::zero(),
            lambda_path: Vec::new(),
            cv_curve: Vec::new(),
            active_set,
            converged: true,
            sweeps: 0,
            feature_names: Vec::new(),
        }
    }
}

impl<S: Scalar> Classifier<S> for SparseLogisticFit<S> {
    fn n_features(&self) -> usize {
        self.beta.len()
    }

    fn predict_proba(&self, x: ArrayView2<'_, S>) -> Result<Vec<S>> {
        Ok(self.decision_function(x)?.into_iter().map(sigmoid).collect())
    }
}

fn active(beta: &[f64]) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

fn path_point<S: Scalar>(state: &State, lambda: f64, converged: bool) -> PathPoint<S> {
    PathPoint {
        lambda: S::of(lambda),
        intercept: S::of(state.b0),
        coefficients: active(&state.beta).into_iter().map(|j| (j, S::of(state.beta[j]))).collect(),
        converged,
    }
}

/// Column-major copy of the design with `{0,1}` labels.
struct Problem {
    cols: Vec<Vec<f64>>,
    y01: Vec<f64>,
}

impl Problem {
    fn new<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8], rows: &[usize]) -> Self {
        let cols = x
            .columns()
            .into_iter()
            .map(|c| rows.iter().map(|&i| c[i].as_f64()).collect())
            .collect();
        Self { cols, y01: rows.iter().map(|&i| y[i] as f64).collect() }
    }

    fn n(&self) -> usize {
        self.y01.len()
    }

    fn eta(&self, state: &State) -> Vec<f64> {
        let mut eta = vec![state.b0; self.n()];
        for (j, &b) in state.beta.iter().enumerate() {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(&self.cols[j]) {
                    *e += x * b;
                }
            }
        }
        eta
    }

    /// Negative log-likelihood, labels mapped to ±1.
    fn nll(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y01)
            .map(|(e, y)| softplus(-(2.0 * y - 1.0) * e))
            .sum()
    }

    fn null_state(&self) -> State {
        let n = self.n() as f64;
        let ybar = (self.y01.iter().sum::<f64>() / n).clamp(PROB_EPS, 1.0 - PROB_EPS);
        State { beta: vec![0.0; self.cols.len()], b0: (ybar / (1.0 - ybar)).ln() }
    }

    fn lambda_max(&self) -> f64 {
        let ybar = self.y01.iter().sum::<f64>() / self.n() as f64;
        self.cols
            .iter()
            .map(|c| c.iter().zip(&self.y01).map(|(x, y)| x * (y - ybar)).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
struct State {
    beta: Vec<f64>,
    b0: f64,
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

struct Outcome {
    converged: bool,
    sweeps: usize,
}

fn objective(prob: &Problem, state: &State, lambda: f64) -> f64 {
    prob.nll(&prob.eta(state)) + lambda * state.beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn solve(prob: &Problem, lambda: f64, state: &mut State, opts: &LogisticOptions) -> Outcome {
    let n = prob.n();
    let p = prob.cols.len();
    let mut sweeps = 0usize;
    let mut eta = prob.eta(state);
    let mut obj = prob.nll(&eta) + lambda * state.beta.iter().map(|b| b.abs()).sum::<f64>();
    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut xwx = vec![0.0; p];

    loop {
        for i in 0..n {
            let pi = sigmoid(eta[i]).clamp(PROB_EPS, 1.0 - PROB_EPS);
            w[i] = pi * (1.0 - pi);
            r[i] = (prob.y01[i] - pi) / w[i];
        }
        for (j, col) in prob.cols.iter().enumerate() {
            xwx[j] = col.iter().zip(&w).map(|(x, wi)| wi * x * x).sum();
        }
        let w_sum: f64 = w.iter().sum();
        let r_start = r.clone();
        let prev = state.clone();

        let sweep = |coords: &mut dyn Iterator<Item = usize>, state: &mut State, r: &mut [f64]| -> f64 {
            let mut dmax = 0.0f64;
            for j in coords {
                let h = xwx[j];
                if h <= 0.0 {
                    continue;
                }
                let col = &prob.cols[j];
                let g: f64 = col.iter().zip(w.iter()).zip(r.iter()).map(|((x, wi), ri)| wi * x * ri).sum::<f64>()
                    + h * state.beta[j];
                let b_new = soft_threshold(g, lambda * (1.0 + THRESHOLD_SLACK)) / h;
                let d = b_new - state.beta[j];
                if d != 0.0 {
                    for (ri, x) in r.iter_mut().zip(col) {
                        *ri -= x * d;
                    }
                    state.beta[j] = b_new;
                    dmax = dmax.max(d.abs());
                }
            }
            let d0 = w.iter().zip(r.iter()).map(|(wi, ri)| wi * ri).sum::<f64>() / w_sum;
            if d0 != 0.0 {
                for ri in r.iter_mut() {
                    *ri -= d0;
                }
                state.b0 += d0;
                dmax = dmax.max(d0.abs());
            }
            dmax
        };

        loop {
            let dmax = sweep(&mut (0..p), state, &mut r);
            sweeps += 1;
            if dmax < opts.tol || sweeps >= opts.max_sweeps {
                break;
            }
            let act = active(&state.beta);
            sweeps += active_set_sweeps(prob, &act, &w, w_sum, lambda, state, &mut r, opts.tol, opts.max_sweeps - sweeps);
            if sweeps >= opts.max_sweeps {
                break;
            }
        }

        // eta = z - r, with z = eta_prev + r_start
        for i in 0..n {
            eta[i] += r_start[i] - r[i];
        }
        let mut new_obj = prob.nll(&eta) + lambda * state.beta.iter().map(|b| b.abs()).sum::<f64>();
        let mut halvings = 0;
        while new_obj > obj + 1e-12 * obj.abs().max(1.0) && halvings < 30 {
            for (b, b_prev) in state.beta.iter_mut().zip(&prev.beta) {
                *b = 0.5 * (*b + b_prev);
            }
            state.b0 = 0.5 * (state.b0 + prev.b0);
            eta = prob.eta(state);
            new_obj = objective(prob, state, lambda);
            halvings += 1;
        }
        obj = new_obj;

        let change = state
            .beta
            .iter()
            .zip(&prev.beta)
            .map(|(a, b)| (a - b).abs())
            .fold((state.b0 - prev.b0).abs(), f64::max);
        if change < opts.tol {
            return Outcome { converged: true, sweeps };
        }
        if sweeps >= opts.max_sweeps {
            return Outcome { converged: false, sweeps };
        }
    }
}

/// Coordinate descent restricted to `act`, run on the weighted Gram matrix of
/// the active columns so each update costs O(|act|) rather than O(N). The
/// working residual `r` is brought back in sync on return.
#[allow(clippy::too_many_arguments)]
fn active_set_sweeps(
    prob: &Problem,
    act: &[usize],
    w: &[f64],
    w_sum: f64,
    lambda: f64,
    state: &mut State,
    r: &mut [f64],
    tol: f64,
    budget: usize,
) -> usize {
    let a = act.len();
    let mut gram = vec![0.0; a * a];
    let mut wx = vec![0.0; a];
    let mut q = vec![0.0; a];
    for (u, &j) in act.iter().enumerate() {
        let cj = &prob.cols[j];
        wx[u] = cj.iter().zip(w).map(|(x, wi)| wi * x).sum();
        q[u] = cj.iter().zip(w).zip(r.iter()).map(|((x, wi), ri)| wi * x * ri).sum();
        for v in u..a {
            let g: f64 = cj.iter().zip(&prob.cols[act[v]]).zip(w).map(|((x, z), wi)| wi * x * z).sum();
            gram[u * a + v] = g;
            gram[v * a + u] = g;
        }
    }
    let mut s: f64 = w.iter().zip(r.iter()).map(|(wi, ri)| wi * ri).sum();
    let beta_before: Vec<f64> = act.iter().map(|&j| state.beta[j]).collect();
    let b0_before = state.b0;
    let threshold = lambda * (1.0 + THRESHOLD_SLACK);

    let mut sweeps = 0;
    while sweeps < budget {
        let mut dmax = 0.0f64;
        for u in 0..a {
            let h = gram[u * a + u];
            if h <= 0.0 {
                continue;
            }
            let j = act[u];
            let b_new = soft_threshold(q[u] + h * state.beta[j], threshold) / h;
            let d = b_new - state.beta[j];
            if d != 0.0 {
                let col = &gram[u * a..(u + 1) * a];
                for (qv, g) in q.iter_mut().zip(col) {
                    *qv -= d * g;
                }
                s -= d * wx[u];
                state.beta[j] = b_new;
                dmax = dmax.max(d.abs());
            }
        }
        let d0 = s / w_sum;
        if d0 != 0.0 {
            for (qv, x) in q.iter_mut().zip(&wx) {
                *qv -= d0 * x;
            }
            s -= d0 * w_sum;
            state.b0 += d0;
            dmax = dmax.max(d0.abs());
        }
        sweeps += 1;
        if dmax < tol {
            break;
        }
    }

    for (u, &j) in act.iter().enumerate() {
        let d = state.beta[j] - beta_before[u];
        if d != 0.0 {
            for (ri, x) in r.iter_mut().zip(&prob.cols[j]) {
                *ri -= x * d;
            }
        }
    }
    let d0 = state.b0 - b0_before;
    for ri in r.iter_mut() {
        *ri -= d0;
    }
    sweeps
}

fn validate_inputs<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::shape("sparse_logistic", format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no rows".into()));
    }
    Ok(())
}

/// Smallest λ at which every coefficient is zero.
pub fn lambda_max<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8]) -> Result<f64> {
    validate_inputs(x, y)?;
    let rows: Vec<usize> = (0..x.nrows()).collect();
    Ok(Problem::new(x, y, &rows).lambda_max())
}

/// `n` values log-spaced from `max` down to `min_ratio · max`.
pub fn lambda_grid(max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![max];
    }
    (0..n)
        .map(|k| max * min_ratio.powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Fit at a single λ from a cold start.
pub fn fit_sparse_logistic<S: Scalar>(
    x: ArrayView2<'_, S>,
    y: &[u8],
    lambda: f64,
    opts: &LogisticOptions,
) -> Result<SparseLogisticFit<S>> {
    validate_inputs(x, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let prob = Problem::new(x, y, &rows);
    let mut state = prob.null_state();
    let out = solve(&prob, lambda, &mut state, opts);
    Ok(SparseLogisticFit::from_state(&state, lambda, out.converged, out.sweeps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub n_folds: usize,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub seed: u64,
    pub solver: LogisticOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { n_folds: 4, n_lambda: 100, min_ratio: 1e-3, seed: 0, solver: LogisticOptions::default() }
    }
}

fn row_hash<S: Scalar>(x: ArrayView2<'_, S>, i: usize, label: u8, seed: u64) -> u64 {
    // FNV-1a over the row's f64 bit patterns and its label
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(label as u64);
    for v in x.row(i) {
        eat(v.as_f64().to_bits());
    }
    h
}

/// Stratified fold assignment keyed by row content.
///
/// Rows with identical features and label always share a fold, and the
/// assignment does not depend on row order. Within each class the distinct
/// rows are ordered by a seeded hash and dealt round-robin, continuing the
/// rotation from one class to the next so fold sizes stay balanced.
pub fn stratified_folds<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8], n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    validate_inputs(x, y)?;
    if n_folds < 2 || x.nrows() < n_folds {
        return Err(Error::InvalidArgument(format!("need at least {n_folds} rows and 2 folds")));
    }
    let hashes: Vec<u64> = (0..x.nrows()).map(|i| row_hash(x, i, y[i], seed)).collect();
    let same_row = |a: usize, b: usize| y[a] == y[b] && x.row(a).iter().zip(x.row(b).iter()).all(|(u, v)| u.as_f64().to_bits() == v.as_f64().to_bits());
    let cmp_rows = |a: usize, b: usize| {
        for (u, v) in x.row(a).iter().zip(x.row(b).iter()) {
            let o = u.as_f64().total_cmp(&v.as_f64());
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    };
    let mut folds = vec![0usize; x.nrows()];
    let mut next = 0usize;
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..x.nrows()).filter(|&i| y[i] == class).collect();
        idx.sort_by(|&a, &b| hashes[a].cmp(&hashes[b]).then_with(|| cmp_rows(a, b)).then(a.cmp(&b)));
        let mut k = 0;
        while k < idx.len() {
            let mut end = k + 1;
            while end < idx.len() && hashes[idx[end]] == hashes[idx[k]] && same_row(idx[end], idx[k]) {
                end += 1;
            }
            for &i in &idx[k..end] {
                folds[i] = next % n_folds;
            }
            next += 1;
            k = end;
        }
    }
    Ok(folds)
}

/// Warm-started path; stops early once the deviance ratio saturates.
fn run_path(prob: &Problem, grid: &[f64], opts: &LogisticOptions) -> Vec<(State, bool, usize)> {
    let mut state = prob.null_state();
    let null_dev = prob.nll(&prob.eta(&state));
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let o = solve(prob, lambda, &mut state, opts);
        out.push((state.clone(), o.converged, o.sweeps));
        let dev = prob.nll(&prob.eta(&state));
        if null_dev > 0.0 && 1.0 - dev / null_dev >= MAX_DEVIANCE_RATIO {
            break;
        }
    }
    out
}

/// Cross-validated path: fold accuracy per λ, selection of the λ with the best
/// mean accuracy (ties go to the larger λ), and the full-data path.
pub fn cv_lambda_path<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8], opts: &CvOptions) -> Result<SparseLogisticFit<S>> {
    validate_inputs(x, y)?;
    let folds = stratified_folds(x, y, opts.n_folds, opts.seed)?;
    for f in 0..opts.n_folds {
        let train_classes: std::collections::BTreeSet<u8> =
            (0..y.len()).filter(|&i| folds[i] != f).map(|i| y[i]).collect();
        if train_classes.len() < 2 {
            return Err(Error::DegenerateFold(f));
        }
    }

    let all: Vec<usize> = (0..x.nrows()).collect();
    let full = Problem::new(x, y, &all);
    let grid_full = lambda_grid(full.lambda_max(), opts.n_lambda, opts.min_ratio);
    let full_path = run_path(&full, &grid_full, &opts.solver);
    let grid = &grid_full[..full_path.len()];

    let mut acc = vec![vec![0.0; opts.n_folds]; grid.len()];
    for f in 0..opts.n_folds {
        let train: Vec<usize> = all.iter().copied().filter(|&i| folds[i] != f).collect();
        let val: Vec<usize> = all.iter().copied().filter(|&i| folds[i] == f).collect();
        let prob = Problem::new(x, y, &train);
        let path = run_path(&prob, grid, &opts.solver);
        for (k, row) in acc.iter_mut().enumerate() {
            let (state, _, _) = &path[k.min(path.len() - 1)];
            let correct = val
                .iter()
                .filter(|&&i| {
                    let z: f64 = state.b0
                        + state.beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, b)| b * x[[i, j]].as_f64()).sum::<f64>();
                    (z > 0.0) == (y[i] == 1)
                })
                .count();
            row[f] = if val.is_empty() { 0.0 } else { correct as f64 / val.len() as f64 };
        }
    }

    let k = opts.n_folds as f64;
    let cv_curve: Vec<CvPoint> = grid
        .iter()
        .zip(&acc)
        .map(|(&lambda, a)| {
            let mean = a.iter().sum::<f64>() / k;
            let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
            CvPoint { lambda, mean_accuracy: mean, stderr: (var / k).sqrt() }
        })
        .collect();
    let mut best = 0;
    for (i, c) in cv_curve.iter().enumerate() {
        if c.mean_accuracy > cv_curve[best].mean_accuracy + 1e-12 {
            best = i;
        }
    }

    let (state, converged, sweeps) = &full_path[best];
    let mut fit = SparseLogisticFit::from_state(state, grid[best], *converged, *sweeps);
    fit.lambda_path = full_path.iter().zip(grid).map(|((s, c, _), &l)| path_point(s, l, *c)).collect();
    fit.cv_curve = cv_curve;
    Ok(fit)
}

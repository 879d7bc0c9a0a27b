use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::SubjectDataset;
use crate::transformer::Transformer;

/// Interpolants evaluated per gradient pass in integrated gradients.
const IG_BATCH: usize = 32;
/// Occluded copies evaluated per forward pass.
const OCCLUSION_BATCH: usize = 256;

/// A model whose class-1 logit can be differentiated with respect to a
/// `T × D` input given in the model's own input units.
pub trait Differentiable {
    /// `(T, D)` of one input.
    fn input_shape(&self) -> (usize, usize);

    /// Class-1 logits of `b` inputs stacked row-major.
    fn logits(&self, xs: &[f64], b: usize) -> Result<Vec<f64>>;

    /// Logits and per-input gradients of `b` stacked inputs.
    fn logits_and_grads(&self, xs: &[f64], b: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)>;
}

/// The transformer is explained in standardized input units.
impl<S: Scalar> Differentiable for Transformer<S> {
    fn input_shape(&self) -> (usize, usize) {
        (self.config.n_positions, self.config.n_embd)
    }

    fn logits(&self, xs: &[f64], b: usize) -> Result<Vec<f64>> {
        let (t, _) = self.input_shape();
        let v: Vec<S> = xs.iter().map(|&x| S::of(x)).collect();
        self.logits_std(&v, b, t)
    }

    fn logits_and_grads(&self, xs: &[f64], b: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (t, _) = self.input_shape();
        let v: Vec<S> = xs.iter().map(|&x| S::of(x)).collect();
        let (z, g) = self.logits_and_input_grads(&v, b, t)?;
        Ok((z, g.into_iter().map(|g| g.into_iter().map(|v| v.as_f64()).collect()).collect()))
    }
}

/// `f(x) = w·x + bias` over a flattened `T × D` input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLogit {
    pub shape: (usize, usize),
    pub w: Vec<f64>,
    pub bias: f64,
}

impl Differentiable for LinearLogit {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn logits(&self, xs: &[f64], b: usize) -> Result<Vec<f64>> {
        let n = self.w.len();
        check_len(xs.len(), b * n)?;
        Ok(xs.chunks(n).map(|x| self.bias + x.iter().zip(&self.w).map(|(a, w)| a * w).sum::<f64>()).collect())
    }

    fn logits_and_grads(&self, xs: &[f64], b: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        Ok((self.logits(xs, b)?, vec![self.w.clone(); b]))
    }
}

fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    IntegratedGradients,
    Occlusion,
}

impl AttributionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMethod::IntegratedGradients => "integrated_gradients",
            AttributionMethod::Occlusion => "occlusion",
        }
    }
}

/// Per-cell attribution for one sample. Positive values push towards the
/// target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub sample: usize,
    pub method: AttributionMethod,
    pub target_class: u8,
    /// `T × D`.
    pub values: Array2<f64>,
    pub baseline: String,
    pub n_steps: Option<usize>,
    pub window: Option<usize>,
    /// Target-class log-odds at the input and at the baseline.
    pub output: f64,
    pub baseline_output: f64,
    pub completeness_gap: Option<f64>,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Long CSV `sample,t,d,value` for any number of attributions.
    pub fn to_csv(attributions: &[Attribution]) -> String {
        let mut out = String::from("sample,t,d,value\n");
        for a in attributions {
            for ((t, d), v) in a.values.indexed_iter() {
                out.push_str(&format!("{},{t},{d},{v}\n", a.sample));
            }
        }
        out
    }
}

/// Reference input for attributions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// All-zero trajectory in standardized units.
    #[default]
    Zero,
    /// Per-cell mean of the standardized training inputs.
    TrainMean,
    Values(Vec<f64>),
}

impl Baseline {
    pub fn describe(&self) -> String {
        match self {
            Baseline::Zero => "zero".into(),
            Baseline::TrainMean => "train_mean".into(),
            Baseline::Values(_) => "custom".into(),
        }
    }

    /// Baseline values in the model's standardized input units.
    pub fn resolve<S: Scalar>(&self, model: &Transformer<S>, dataset: &SubjectDataset) -> Result<Vec<f64>> {
        let (t, d) = model.input_shape();
        match self {
            Baseline::Zero => Ok(vec![0.0; t * d]),
            Baseline::TrainMean => {
                let rows = dataset.train_indices();
                let v = model.batch_values(dataset.x.view(), &rows)?;
                let mut mean = vec![0.0; t * d];
                for chunk in v.chunks(t * d) {
                    for (m, x) in mean.iter_mut().zip(chunk) {
                        *m += x.as_f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows.len().max(1) as f64);
                Ok(mean)
            }
            Baseline::Values(v) => {
                check_len(v.len(), t * d)?;
                Ok(v.clone())
            }
        }
    }
}

/// Standardized input of subject `i` as the transformer sees it.
pub fn model_input<S: Scalar>(model: &Transformer<S>, dataset: &SubjectDataset, i: usize) -> Result<Vec<f64>> {
    if i >= dataset.n_subjects() {
        return Err(Error::OutOfRange { index: i, len: dataset.n_subjects() });
    }
    Ok(model.batch_values(dataset.x.view(), &[i])?.into_iter().map(|v| v.as_f64()).collect())
}

fn sign(target_class: u8) -> Result<f64> {
    match target_class {
        0 => Ok(-1.0),
        1 => Ok(1.0),
        c => Err(Error::InvalidArgument(format!("target class {c} is not 0 or 1"))),
    }
}

/// Integrated gradients of the target-class log-odds along the straight
/// path from `baseline` to `x`, using the midpoint rule with `n_steps` points.
pub fn integrated_gradients<M: Differentiable + ?Sized>(
    model: &M,
    sample: usize,
    x: &[f64],
    target_class: u8,
    baseline: &[f64],
    baseline_name: &str,
    n_steps: usize,
) -> Result<Attribution> {
    let (t, d) = model.input_shape();
    let n = t * d;
    check_len(x.len(), n)?;
    if baseline.len() != n {
        return Err(Error::shape("integrated_gradients", format!("baseline has {} values, input has {n}", baseline.len())));
    }
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be positive".into()));
    }
    let s = sign(target_class)?;
    let delta: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();

    let mut grad_sum = vec![0.0; n];
    let mut m = 0;
    while m < n_steps {
        let count = IG_BATCH.min(n_steps - m);
        let mut points = Vec::with_capacity(count * n);
        for j in 0..count {
            let alpha = (m + j) as f64 + 0.5;
            let alpha = alpha / n_steps as f64;
            points.extend(baseline.iter().zip(&delta).map(|(b, dl)| b + alpha * dl));
        }
        let (_, grads) = model.logits_and_grads(&points, count)?;
        for g in grads {
            for (acc, v) in grad_sum.iter_mut().zip(g) {
                *acc += v;
            }
        }
        m += count;
    }
    let values: Vec<f64> = delta.iter().zip(&grad_sum).map(|(dl, g)| s * dl * g / n_steps as f64).collect();

    let mut ends = x.to_vec();
    ends.extend_from_slice(baseline);
    let z = model.logits(&ends, 2)?;
    let (output, baseline_output) = (s * z[0], s * z[1]);
    let total: f64 = values.iter().sum();
    Ok(Attribution {
        sample,
        method: AttributionMethod::IntegratedGradients,
        target_class,
        values: Array2::from_shape_vec((t, d), values).expect("T x D"),
        baseline: baseline_name.to_string(),
        n_steps: Some(n_steps),
        window: None,
        output,
        baseline_output,
        completeness_gap: Some((total - (output - baseline_output)).abs()),
    })
}

/// Drop in target-class log-odds when blocks of `window` consecutive time
/// points of one species are replaced by the baseline. Every cell of a block
/// receives the block's drop.
pub fn occlusion<M: Differentiable + ?Sized>(
    model: &M,
    sample: usize,
    x: &[f64],
    target_class: u8,
    baseline: &[f64],
    baseline_name: &str,
    window: usize,
) -> Result<Attribution> {
    let (t, d) = model.input_shape();
    check_len(x.len(), t * d)?;
    check_len(baseline.len(), t * d)?;
    if window == 0 || window > t {
        return Err(Error::InvalidArgument(format!("occlusion window {window} must be in 1..={t}")));
    }
    let s = sign(target_class)?;
    let blocks: Vec<(usize, usize)> = (0..t).step_by(window).flat_map(|t0| (0..d).map(move |dd| (t0, dd))).collect();
    let mut ends = x.to_vec();
    ends.extend_from_slice(baseline);
    let z = model.logits(&ends, 2)?;
    let output = s * z[0];

    let mut values = Array2::zeros((t, d));
    for chunk in blocks.chunks(OCCLUSION_BATCH) {
        let mut copies = Vec::with_capacity(chunk.len() * t * d);
        for &(t0, dd) in chunk {
            let mut c = x.to_vec();
            for tt in t0..(t0 + window).min(t) {
                c[tt * d + dd] = baseline[tt * d + dd];
            }
            copies.extend(c);
        }
        let zs = model.logits(&copies, chunk.len())?;
        for (&(t0, dd), zo) in chunk.iter().zip(zs) {
            for tt in t0..(t0 + window).min(t) {
                values[[tt, dd]] = output - s * zo;
            }
        }
    }
    Ok(Attribution {
        sample,
        method: AttributionMethod::Occlusion,
        target_class,
        values,
        baseline: baseline_name.to_string(),
        n_steps: None,
        window: Some(window),
        output,
        baseline_output: s * z[1],
        completeness_gap: None,
    })
}

/// Mean absolute attribution per cell across samples (`T × D`).
pub fn cell_importance(attributions: &[Attribution]) -> Result<Array2<f64>> {
    let first = attributions.first().ok_or_else(|| Error::InvalidArgument("no attributions".into()))?;
    let mut acc = Array2::<f64>::zeros(first.values.dim());
    for a in attributions {
        if a.values.dim() != acc.dim() {
            return Err(Error::shape("cell_importance", "attributions differ in shape"));
        }
        acc.zip_mut_with(&a.values, |s, v| *s += v.abs());
    }
    Ok(acc / attributions.len() as f64)
}

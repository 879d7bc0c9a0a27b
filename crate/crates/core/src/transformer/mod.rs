//! Transformer encoder classifier over trajectory sequences and its
//! concept-bottleneck variant.
//!
//! Each subject's `T × D` abundance matrix is standardized per species and
//! used directly as the token sequence (one token per time point, `D =
//! n_embd`), plus learned position embeddings. Blocks are pre-norm:
//! `x + attn(ln(x))`, then `x + mlp(ln(x))`, followed by a final layer norm.
//! The plain head mean-pools over time into one logit. The bottleneck head
//! maps the flattened `T × n_embd` state to `n_concept` concept logits and
//! classifies from those alone through a small ReLU network.

mod train;

pub use train::{train, EpochLog, TrainedTransformer};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glassbox::{check_width, Classifier};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub n_embd: usize,
    pub n_positions: usize,
    pub n_layer: usize,
    pub n_head: usize,
    /// Hidden width of the per-block MLP.
    pub mlp_width: usize,
    pub n_concept: usize,
    pub n_class: usize,
    pub causal_mask: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub cbm_lambda: f64,
    pub seed: u64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            n_embd: 144,
            n_positions: 50,
            n_layer: 6,
            n_head: 4,
            mlp_width: 4 * 144,
            n_concept: 25,
            n_class: 2,
            causal_mask: true,
            epochs: 70,
            batch_size: 32,
            lr: 3e-4,
            cbm_lambda: 1.0,
            seed: 0,
        }
    }
}

impl TransformerConfig {
    /// Two blocks; everything else at the defaults.
    pub fn desk() -> Self {
        Self { n_layer: 2, ..Self::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.n_embd / self.n_head
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_head == 0 || self.n_embd % self.n_head != 0 {
            return bad(format!("n_embd = {} is not divisible by n_head = {}", self.n_embd, self.n_head));
        }
        if self.n_class != 2 {
            return bad("only binary classification (n_class = 2) is supported".into());
        }
        if self.n_positions == 0 || self.mlp_width == 0 || self.n_concept == 0 || self.batch_size == 0 {
            return bad("n_positions, mlp_width, n_concept and batch_size must be positive".into());
        }
        if !(self.lr >= 0.0) || !(self.cbm_lambda >= 0.0) {
            return bad("lr and cbm_lambda must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Cbm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Cbm => "cbm",
        }
    }
}

/// Per-species standardization of the token inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputScaler {
    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    /// Population mean and std of each species over all time points of `rows`.
    /// Species with zero spread keep unit scale.
    pub fn fit(x: ArrayView3<'_, f64>, rows: &[usize]) -> Self {
        let d = x.dim().2;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut n = 0.0;
        for &i in rows {
            for row in x.index_axis(Axis(0), i).rows() {
                for (j, v) in row.iter().enumerate() {
                    mean[j] += v;
                    sq[j] += v * v;
                }
                n += 1.0;
            }
        }
        let n = f64::max(n, 1.0);
        let std = (0..d)
            .map(|j| {
                let m = mean[j] / n;
                let var = (sq[j] / n - m * m).max(0.0);
                if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 }
            })
            .collect();
        mean.iter_mut().for_each(|m| *m /= n);
        Self { mean, std }
    }

    pub fn apply(&self, v: f64, species: usize) -> f64 {
        (v - self.mean[species]) / self.std[species]
    }
}

/// Concept-logit values used for binary interventions: the 5th and 95th
/// percentiles of each concept's logit over the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRange {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Named graph nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `[B, 1]` class logits.
    pub logits: Var,
    /// `[B, n_concept]`, bottleneck mode only.
    pub concept_logits: Option<Var>,
    /// Token inputs plus positions, `[B, T, E]`.
    pub embedded: Var,
    /// Residual stream after each block, `[B, T, E]`.
    pub blocks: Vec<Var>,
    /// Output of the final layer norm, `[B, T, E]`.
    pub final_norm: Var,
    /// Mean over time of `final_norm`, `[B, E]`.
    pub pooled: Var,
    /// Attention weights per block and head, `[B, T, T]` each.
    pub attention: Vec<Vec<Var>>,
}

/// Hidden-state layer names accepted by [`Transformer::hidden_states`].
pub fn layer_names(n_layer: usize) -> Vec<String> {
    let mut names = vec!["embed".to_string()];
    names.extend((0..n_layer).map(|l| format!("block.{l}")));
    names.extend(["ln_f".to_string(), "pooled".to_string()]);
    names
}

/// Multi-head self-attention on `[B, T, E]` input; returns the projected
/// output and the per-head attention matrices.
#[allow(clippy::too_many_arguments)]
pub fn self_attention<S: Scalar>(
    g: &mut Graph<S>,
    x: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    biases: Option<[Var; 4]>,
    n_head: usize,
    causal: bool,
) -> Result<(Var, Vec<Var>)> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::shape("self_attention", format!("input {shape:?} is not [B, T, E]")));
    }
    let (t, e) = (shape[1], shape[2]);
    if n_head == 0 || e % n_head != 0 {
        return Err(Error::shape("self_attention", format!("width {e} not divisible into {n_head} heads")));
    }
    let dh = e / n_head;
    let proj = |g: &mut Graph<S>, w: Var, b: Option<Var>| -> Result<Var> {
        let y = g.matmul(x, w)?;
        match b {
            Some(b) => g.add_bias(y, b),
            None => Ok(y),
        }
    };
    let q = proj(g, wq, biases.map(|b| b[0]))?;
    let k = proj(g, wk, biases.map(|b| b[1]))?;
    let v = proj(g, wv, biases.map(|b| b[2]))?;
    let mask: Option<Vec<bool>> = causal.then(|| (0..t * t).map(|i| i % t > i / t).collect());
    let mut heads = Vec::with_capacity(n_head);
    let mut attn = Vec::with_capacity(n_head);
    for h in 0..n_head {
        let qh = g.slice(q, 2, h * dh, dh)?;
        let kh = g.slice(k, 2, h * dh, dh)?;
        let vh = g.slice(v, 2, h * dh, dh)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let mut scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        if let Some(m) = &mask {
            scores = g.masked_fill(scores, m, S::neg_infinity())?;
        }
        let a = g.softmax(scores)?;
        heads.push(g.matmul(a, vh)?);
        attn.push(a);
    }
    let cat = if n_head == 1 { heads[0] } else { g.concat(&heads, 2)? };
    let out = g.matmul(cat, wo)?;
    let out = match biases {
        Some(b) => g.add_bias(out, b[3])?,
        None => out,
    };
    Ok((out, attn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Serialize + serde::de::DeserializeOwned")]
pub struct Transformer<S> {
    pub config: TransformerConfig,
    pub mode: Mode,
    pub params: ParamStore<S>,
    pub scaler: InputScaler,
    pub concept_range: Option<ConceptRange>,
}

struct Bound<'a, S> {
    vars: &'a [Var],
    store: &'a ParamStore<S>,
}

impl<S: Scalar> Bound<'_, S> {
    fn get(&self, name: &str) -> Var {
        self.vars[self.store.index_of(name).unwrap_or_else(|| panic!("missing parameter {name}"))]
    }
}

impl<S: Scalar> Transformer<S> {
    /// Randomly initialized model: weights `N(0, 0.02²)`, residual output
    /// projections scaled down by `sqrt(2 n_layer)`, zero biases, unit norms.
    pub fn new(config: TransformerConfig, mode: Mode) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(config.seed, "transformer-init");
        let (e, m, k) = (config.n_embd, config.mlp_width, config.n_concept);
        let std = 0.02;
        let resid_std = std / (2.0 * config.n_layer.max(1) as f64).sqrt();
        let mut p = ParamStore::new();
        p.insert("pos", Tensor::randn(&[config.n_positions, e], 0.01, &mut r));
        for l in 0..config.n_layer {
            let n = |s: &str| format!("block.{l}.{s}");
            p.insert(&n("ln1.gamma"), Tensor::full(&[e], S::one()));
            p.insert(&n("ln1.beta"), Tensor::zeros(&[e]));
            for w in ["wq", "wk", "wv"] {
                p.insert(&n(&format!("attn.{w}")), Tensor::randn(&[e, e], std, &mut r));
            }
            p.insert(&n("attn.wo"), Tensor::randn(&[e, e], resid_std, &mut r));
            for b in ["bq", "bk", "bv", "bo"] {
                p.insert(&n(&format!("attn.{b}")), Tensor::zeros(&[e]));
            }
            p.insert(&n("ln2.gamma"), Tensor::full(&[e], S::one()));
            p.insert(&n("ln2.beta"), Tensor::zeros(&[e]));
            p.insert(&n("mlp.w1"), Tensor::randn(&[e, m], std, &mut r));
            p.insert(&n("mlp.b1"), Tensor::zeros(&[m]));
            p.insert(&n("mlp.w2"), Tensor::randn(&[m, e], resid_std, &mut r));
            p.insert(&n("mlp.b2"), Tensor::zeros(&[e]));
        }
        p.insert("ln_f.gamma", Tensor::full(&[e], S::one()));
        p.insert("ln_f.beta", Tensor::zeros(&[e]));
        match mode {
            Mode::Plain => {
                p.insert("head.w", Tensor::randn(&[e, 1], std, &mut r));
                p.insert("head.b", Tensor::zeros(&[1]));
            }
            Mode::Cbm => {
                let flat = config.n_positions * e;
                p.insert("concept.w", Tensor::randn(&[flat, k], 1.0 / (flat as f64).sqrt(), &mut r));
                p.insert("concept.b", Tensor::zeros(&[k]));
                // He initialization for the ReLU layers of the class head
                for i in 1..=3 {
                    p.insert(&format!("g.w{i}"), Tensor::randn(&[k, k], (2.0 / k as f64).sqrt(), &mut r));
                    p.insert(&format!("g.b{i}"), Tensor::zeros(&[k]));
                }
                p.insert("g.out.w", Tensor::randn(&[k, 1], (1.0 / k as f64).sqrt(), &mut r));
                p.insert("g.out.b", Tensor::zeros(&[1]));
            }
        }
        Ok(Self { scaler: InputScaler::identity(e), config, mode, params: p, concept_range: None })
    }

    pub fn n_parameters(&self) -> usize {
        self.params.n_values()
    }

    fn check_input(&self, t: usize, d: usize) -> Result<()> {
        if d != self.config.n_embd {
            return Err(Error::Dimension { expected: self.config.n_embd, actual: d });
        }
        if t > self.config.n_positions {
            return Err(Error::InvalidArgument(format!("sequence length {t} exceeds n_positions = {}", self.config.n_positions)));
        }
        if self.mode == Mode::Cbm && t != self.config.n_positions {
            return Err(Error::InvalidArgument(format!(
                "the concept bottleneck needs exactly n_positions = {} time points, got {t}",
                self.config.n_positions
            )));
        }
        Ok(())
    }

    /// Standardized `[B, T, D]` values for the selected subjects.
    pub fn batch_values(&self, x: ArrayView3<'_, f64>, rows: &[usize]) -> Result<Vec<S>> {
        let (_, t, d) = x.dim();
        self.check_input(t, d)?;
        let mut out = Vec::with_capacity(rows.len() * t * d);
        for &i in rows {
            for tt in 0..t {
                for j in 0..d {
                    out.push(S::of(self.scaler.apply(x[[i, tt, j]], j)));
                }
            }
        }
        Ok(out)
    }

    /// Build the forward graph on an already-standardized `[B, T, E]` input.
    /// `params` must come from `self.params.bind(g)` (or a frozen copy).
    pub fn forward(&self, g: &mut Graph<S>, params: &[Var], x: Var) -> Result<ForwardTrace> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(Error::shape("forward", format!("input {shape:?} is not [B, T, E]")));
        }
        self.check_input(shape[1], shape[2])?;
        let (b, t, e) = (shape[0], shape[1], shape[2]);
        let p = Bound { vars: params, store: &self.params };
        let eps = 1e-5;

        let embedded = g.embedding_add(x, p.get("pos"))?;
        let mut h = embedded;
        let mut blocks = Vec::with_capacity(self.config.n_layer);
        let mut attention = Vec::with_capacity(self.config.n_layer);
        for l in 0..self.config.n_layer {
            let n = |s: &str| format!("block.{l}.{s}");
            let a_in = g.layer_norm(h, p.get(&n("ln1.gamma")), p.get(&n("ln1.beta")), eps)?;
            let (a_out, attn) = self_attention(
                g,
                a_in,
                p.get(&n("attn.wq")),
                p.get(&n("attn.wk")),
                p.get(&n("attn.wv")),
                p.get(&n("attn.wo")),
                Some([p.get(&n("attn.bq")), p.get(&n("attn.bk")), p.get(&n("attn.bv")), p.get(&n("attn.bo"))]),
                self.config.n_head,
                self.config.causal_mask,
            )?;
            h = g.add(h, a_out)?;
            let m_in = g.layer_norm(h, p.get(&n("ln2.gamma")), p.get(&n("ln2.beta")), eps)?;
            let z = g.matmul(m_in, p.get(&n("mlp.w1")))?;
            let z = g.add_bias(z, p.get(&n("mlp.b1")))?;
            let z = g.relu(z);
            let z = g.matmul(z, p.get(&n("mlp.w2")))?;
            let z = g.add_bias(z, p.get(&n("mlp.b2")))?;
            h = g.add(h, z)?;
            blocks.push(h);
            attention.push(attn);
        }
        let final_norm = g.layer_norm(h, p.get("ln_f.gamma"), p.get("ln_f.beta"), eps)?;
        let pooled = g.mean_pool(final_norm, 1)?;

        let (logits, concept_logits) = match self.mode {
            Mode::Plain => {
                let z = g.matmul(pooled, p.get("head.w"))?;
                (g.add_bias(z, p.get("head.b"))?, None)
            }
            Mode::Cbm => {
                let flat = g.reshape(final_norm, &[b, t * e])?;
                let c = g.matmul(flat, p.get("concept.w"))?;
                let c = g.add_bias(c, p.get("concept.b"))?;
                (self.class_head(g, params, c)?, Some(c))
            }
        };
        Ok(ForwardTrace { logits, concept_logits, embedded, blocks, final_norm, pooled, attention })
    }

    /// The bottleneck's class network applied to `[B, n_concept]` concept logits.
    pub fn class_head(&self, g: &mut Graph<S>, params: &[Var], concepts: Var) -> Result<Var> {
        if self.mode != Mode::Cbm {
            return Err(Error::InvalidArgument("class_head needs a concept-bottleneck model".into()));
        }
        let p = Bound { vars: params, store: &self.params };
        let mut z = concepts;
        for i in 1..=3 {
            z = g.matmul(z, p.get(&format!("g.w{i}")))?;
            z = g.add_bias(z, p.get(&format!("g.b{i}")))?;
            z = g.relu(z);
        }
        let z = g.matmul(z, p.get("g.out.w"))?;
        g.add_bias(z, p.get("g.out.b"))
    }

    /// Run `f` on frozen-parameter forward passes over batches of `rows`.
    fn batched<T>(
        &self,
        x: ArrayView3<'_, f64>,
        rows: &[usize],
        mut f: impl FnMut(&mut Graph<S>, &[Var], &ForwardTrace, usize) -> Result<T>,
    ) -> Result<Vec<T>> {
        let (_, t, d) = x.dim();
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(self.config.batch_size.max(1)) {
            let mut g = Graph::new();
            let params: Vec<Var> = self.params.iter().map(|(_, t)| g.constant(&t.shape, t.data.clone()).expect("valid")).collect();
            let input = g.constant(&[chunk.len(), t, d], self.batch_values(x, chunk)?)?;
            let trace = self.forward(&mut g, &params, input)?;
            out.push(f(&mut g, &params, &trace, chunk.len())?);
        }
        Ok(out)
    }

    /// Class-1 logits of the selected subjects.
    pub fn logits(&self, x: ArrayView3<'_, f64>, rows: &[usize]) -> Result<Vec<f64>> {
        let parts = self.batched(x, rows, |g, _, tr, _| Ok(g.value(tr.logits).iter().map(|v| v.as_f64()).collect::<Vec<_>>()))?;
        Ok(parts.concat())
    }

    pub fn predict_proba_rows(&self, x: ArrayView3<'_, f64>, rows: &[usize]) -> Result<Vec<f64>> {
        Ok(self.logits(x, rows)?.into_iter().map(crate::scalar::sigmoid).collect())
    }

    /// `[rows, n_concept]` concept logits.
    pub fn concept_logits(&self, x: ArrayView3<'_, f64>, rows: &[usize]) -> Result<Array2<f64>> {
        if self.mode != Mode::Cbm {
            return Err(Error::InvalidArgument("concept logits need a concept-bottleneck model".into()));
        }
        let k = self.config.n_concept;
        let parts = self.batched(x, rows, |g, _, tr, _| {
            Ok(g.value(tr.concept_logits.expect("cbm")).iter().map(|v| v.as_f64()).collect::<Vec<_>>())
        })?;
        Ok(Array2::from_shape_vec((rows.len(), k), parts.concat()).expect("B x K"))
    }

    /// Hidden states of `layer` (see [`layer_names`]) as `[rows, T, E]`, or `[rows, 1, E]` for `pooled`.
    pub fn hidden_states(&self, x: ArrayView3<'_, f64>, rows: &[usize], layer: &str) -> Result<Array3<f64>> {
        if !layer_names(self.config.n_layer).iter().any(|n| n == layer) {
            return Err(Error::UnknownLayer(layer.to_string()));
        }
        let (_, t, _) = x.dim();
        let e = self.config.n_embd;
        let parts = self.batched(x, rows, |g, _, tr, _| {
            let v = match layer {
                "embed" => tr.embedded,
                "ln_f" => tr.final_norm,
                "pooled" => tr.pooled,
                other => tr.blocks[other["block.".len()..].parse::<usize>().expect("validated")],
            };
            Ok(g.value(v).iter().map(|v| v.as_f64()).collect::<Vec<_>>())
        })?;
        let steps = if layer == "pooled" { 1 } else { t };
        Ok(Array3::from_shape_vec((rows.len(), steps, e), parts.concat()).expect("B x T x E"))
    }

    /// Class logits after replacing concept logits `(k, value)` and zeroing
    /// the concepts in `masked`. Overrides win over masks for the same index.
    pub fn intervene_concepts(
        &self,
        x: ArrayView3<'_, f64>,
        rows: &[usize],
        overrides: &[Vec<(usize, f64)>],
        masked: &[usize],
    ) -> Result<Vec<f64>> {
        if self.mode != Mode::Cbm {
            return Err(Error::InvalidArgument("interventions need a concept-bottleneck model".into()));
        }
        let k = self.config.n_concept;
        if overrides.len() != rows.len() && overrides.len() > 1 {
            return Err(Error::InvalidArgument(format!("{} override sets for {} rows", overrides.len(), rows.len())));
        }
        if let Some(&bad) = overrides.iter().flatten().map(|(i, _)| i).chain(masked).find(|&&i| i >= k) {
            return Err(Error::OutOfRange { index: bad, len: k });
        }
        let concepts = self.concept_logits(x, rows)?;
        self.class_logits_from_concepts(concepts.view(), |r, c| {
            for &m in masked {
                c[m] = 0.0;
            }
            let set = if overrides.len() == 1 { &overrides[0] } else { overrides.get(r).map(|v| v.as_slice()).unwrap_or(&[]) };
            for &(i, v) in set {
                c[i] = v;
            }
        })
    }

    /// Class logits computed from given concept logits, after `edit(row, concepts)`.
    pub fn class_logits_from_concepts(&self, concepts: ArrayView2<'_, f64>, mut edit: impl FnMut(usize, &mut [f64])) -> Result<Vec<f64>> {
        let k = self.config.n_concept;
        if concepts.ncols() != k {
            return Err(Error::Dimension { expected: k, actual: concepts.ncols() });
        }
        let mut edited = Vec::with_capacity(concepts.len());
        for (r, row) in concepts.rows().into_iter().enumerate() {
            let mut c: Vec<f64> = row.to_vec();
            edit(r, &mut c);
            edited.extend(c.into_iter().map(S::of));
        }
        let mut g = Graph::new();
        let params: Vec<Var> = self.params.iter().map(|(_, t)| g.constant(&t.shape, t.data.clone()).expect("valid")).collect();
        let c = g.constant(&[concepts.nrows(), k], edited)?;
        let out = self.class_head(&mut g, &params, c)?;
        Ok(g.value(out).iter().map(|v| v.as_f64()).collect())
    }

    /// Override every concept with its calibrated low/high logit according to
    /// binary `truth` (`[rows, n_concept]`).
    pub fn oracle_overrides(&self, truth: ArrayView2<'_, u8>) -> Result<Vec<Vec<(usize, f64)>>> {
        let range = self.concept_range.as_ref().ok_or_else(|| Error::InvalidArgument("model has no concept calibration".into()))?;
        if truth.ncols() != self.config.n_concept {
            return Err(Error::Dimension { expected: self.config.n_concept, actual: truth.ncols() });
        }
        Ok(truth
            .rows()
            .into_iter()
            .map(|row| row.iter().enumerate().map(|(k, &c)| (k, if c == 1 { range.high[k] } else { range.low[k] })).collect())
            .collect())
    }

    /// Logits of `b` standardized inputs stacked as `[b, T, E]`, evaluated in batches.
    pub fn logits_std(&self, x_std: &[S], b: usize, t: usize) -> Result<Vec<f64>> {
        let e = self.config.n_embd;
        if x_std.len() != b * t * e {
            return Err(Error::Dimension { expected: b * t * e, actual: x_std.len() });
        }
        let mut out = Vec::with_capacity(b);
        for chunk in x_std.chunks(self.config.batch_size.max(1) * t * e) {
            let mut g = Graph::new();
            let params: Vec<Var> = self.params.iter().map(|(_, p)| g.constant(&p.shape, p.data.clone()).expect("valid")).collect();
            let input = g.constant(&[chunk.len() / (t * e), t, e], chunk.to_vec())?;
            let trace = self.forward(&mut g, &params, input)?;
            out.extend(g.value(trace.logits).iter().map(|v| v.as_f64()));
        }
        Ok(out)
    }

    /// Logit of one standardized `[T, E]` input and its gradient with respect to that input.
    pub fn logit_and_input_grad(&self, x_std: &[S], t: usize) -> Result<(f64, Vec<S>)> {
        let (mut outs, mut grads) = self.logits_and_input_grads(x_std, 1, t)?;
        Ok((outs.remove(0), grads.remove(0)))
    }

    /// Logits and input gradients for `b` standardized inputs stacked as `[b, T, E]`.
    pub fn logits_and_input_grads(&self, x_std: &[S], b: usize, t: usize) -> Result<(Vec<f64>, Vec<Vec<S>>)> {
        let e = self.config.n_embd;
        let mut g = Graph::new();
        let params: Vec<Var> = self.params.iter().map(|(_, p)| g.constant(&p.shape, p.data.clone()).expect("valid")).collect();
        let input = g.variable(&[b, t, e], x_std.to_vec())?;
        let trace = self.forward(&mut g, &params, input)?;
        let logits: Vec<f64> = g.value(trace.logits).iter().map(|v| v.as_f64()).collect();
        // samples do not interact, so d(sum of logits)/dx_i = d(logit_i)/dx_i
        let total = g.sum(trace.logits);
        g.backward(total)?;
        let grad = g.grad(input).map(|v| v.to_vec()).unwrap_or_else(|| vec![S::zero(); b * t * e]);
        Ok((logits, grad.chunks(t * e).map(|c| c.to_vec()).collect()))
    }
}

/// Uniform contract over flattened raw rows: column `t * D + d` holds species
/// `d` at time `t`, as produced by the raw representation.
impl<S: Scalar> Classifier<f64> for Transformer<S> {
    fn n_features(&self) -> usize {
        self.config.n_positions * self.config.n_embd
    }

    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.n_features(), x.ncols())?;
        let x3 = x.to_owned().into_shape_with_order((x.nrows(), self.config.n_positions, self.config.n_embd)).expect("width checked");
        let rows: Vec<usize> = (0..x.nrows()).collect();
        self.predict_proba_rows(x3.view(), &rows)
    }
}

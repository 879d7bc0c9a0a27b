use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `[batch, m, k] x [k, n]` (shared right operand) or `[batch, k, n]`.
    MatMul { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, shared: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias { a: Var, bias: Var },
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax { a: Var, cols: usize },
    LayerNorm { a: Var, gamma: Var, beta: Var, cols: usize, mean: Vec<f64>, rstd: Vec<f64> },
    MeanPool { a: Var, outer: usize, len: usize, inner: usize },
    Sum(Var),
    Mean(Var),
    Concat { inputs: Vec<Var>, outer: usize, sizes: Vec<usize>, inner: usize },
    Slice { a: Var, outer: usize, axis_len: usize, start: usize, len: usize, inner: usize },
    Transpose { a: Var, batch: usize, m: usize, n: usize },
    Reshape(Var),
    EmbeddingAdd { a: Var, pos: Var, t: usize, e: usize },
    MaskedFill { a: Var, mask: Vec<bool> },
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node<S> {
    shape: Vec<usize>,
    value: Vec<S>,
    op: Op,
    requires_grad: bool,
}

/// A single-use differentiation tape.
#[derive(Debug)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
    consumed: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], ta: bool, b: &[S], tb: bool, c: &mut [S], beta: S) {
    let av = if ta {
        ArrayView2::from_shape((k, m), a).expect("gemm a").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm a")
    };
    let bv = if tb {
        ArrayView2::from_shape((n, k), b).expect("gemm b").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm b")
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("gemm c");
    general_mat_mul(S::one(), &av, &bv, beta, &mut cv);
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), consumed: false }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<S>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Register a tensor as a leaf; it is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor<S>) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, t.requires_grad)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<S>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, false))
    }

    pub fn variable(&mut self, shape: &[usize], data: Vec<S>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, true))
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<S> {
        let n = &self.nodes[v.0];
        Tensor { shape: n.shape.clone(), data: n.value.clone(), requires_grad: n.requires_grad, grad: self.grads[v.0].clone() }
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads[v.0].as_deref()
    }

    /// Gradients for `vars`, zero-filled where no gradient flowed.
    pub fn grads_of(&self, vars: &[Var]) -> Vec<Vec<S>> {
        vars.iter()
            .map(|v| self.grads[v.0].clone().unwrap_or_else(|| vec![S::zero(); self.nodes[v.0].value.len()]))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(S) -> S) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a).to_vec(), value, op, rg)
    }

    /// Matrix product over the last two axes. The right operand is either a
    /// plain `[k, n]` matrix shared across the batch, or has the same leading
    /// axes as the left operand.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let err = || Error::shape("matmul", format!("{sa:?} x {sb:?}"));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(err());
        }
        let lead = &sa[..sa.len() - 2];
        let batch: usize = lead.iter().product();
        let shared = sb.len() == 2;
        if !shared && &sb[..sb.len() - 2] != lead {
            return Err(err());
        }
        let mut out = vec![S::zero(); batch * m * n];
        let (va, vb) = (self.value(a), self.value(b));
        if shared {
            gemm(batch * m, k, n, va, false, vb, false, &mut out, S::zero());
        } else {
            for i in 0..batch {
                gemm(m, k, n, &va[i * m * k..(i + 1) * m * k], false, &vb[i * k * n..(i + 1) * k * n], false, &mut out[i * m * n..(i + 1) * m * n], S::zero());
            }
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, Op::MatMul { a, b, batch, m, k, n, shared }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x - *y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), value, Op::Mul(a, b), rg))
    }

    /// Add a vector along the last axis.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.len() != 1 || sa.last() != Some(&sb[0]) {
            return Err(Error::shape("add_bias", format!("{sa:?} + {sb:?}")));
        }
        let c = sb[0];
        let bv = self.value(bias);
        let value = self.value(a).iter().enumerate().map(|(i, x)| *x + bv[i % c]).collect();
        let rg = self.rg(&[a, bias]);
        Ok(self.push(sa.to_vec(), value, Op::AddBias { a, bias }, rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let cs = S::of(c);
        self.unary(a, Op::Scale(a, c), |x| x * cs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > S::zero() { x } else { S::zero() })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let cols = *shape.last().ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = 0.0f64;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += x.as_f64();
            }
            let inv = S::of(1.0 / z);
            row.iter_mut().for_each(|x| *x *= inv);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, Op::Softmax { a, cols }, rg))
    }

    /// Normalize each row over the last axis, then apply `gamma * x + beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let cols = *shape.last().ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
        if self.shape(gamma) != [cols] || self.shape(beta) != [cols] {
            return Err(Error::shape("layer_norm", format!("{shape:?} with gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta))));
        }
        let rows = self.value(a).len() / cols;
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * cols);
        for row in self.value(a).chunks(cols) {
            let mu = row.iter().map(|x| x.as_f64()).sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x.as_f64() - mu).powi(2)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + eps).sqrt();
            out.extend(row.iter().enumerate().map(|(j, x)| S::of((x.as_f64() - mu) * rs) * g[j] + b[j]));
            mean.push(mu);
            rstd.push(rs);
        }
        let rg = self.rg(&[a, gamma, beta]);
        Ok(self.push(shape, out, Op::LayerNorm { a, gamma, beta, cols, mean, rstd }, rg))
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_pool(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(Error::shape("mean_pool", format!("axis {axis} of {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let va = self.value(a);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let s: f64 = (0..len).map(|l| va[(o * len + l) * inner + i].as_f64()).sum();
                out.push(S::of(s / len as f64));
            }
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        let rg = self.rg(&[a]);
        Ok(self.push(new_shape, out, Op::MeanPool { a, outer, len, inner }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().map(|x| x.as_f64()).sum();
        let rg = self.rg(&[a]);
        self.push(vec![], vec![S::of(s)], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: f64 = v.iter().map(|x| x.as_f64()).sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(&[a]);
        self.push(vec![], vec![S::of(s)], Op::Mean(a), rg)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*inputs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?).to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {axis} of {first:?}")));
        }
        let mut sizes = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len() || s.iter().enumerate().any(|(i, d)| i != axis && *d != first[i]) {
                return Err(Error::shape("concat", format!("{first:?} with {s:?} along axis {axis}")));
            }
            sizes.push(s[axis]);
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let total: usize = sizes.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &len) in inputs.iter().zip(&sizes) {
                out.extend_from_slice(&self.value(v)[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.rg(inputs);
        Ok(self.push(shape, out, Op::Concat { inputs: inputs.to_vec(), outer, sizes, inner }, rg))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape("slice", format!("{start}..{} of axis {axis} in {shape:?}", start + len)));
        }
        let (outer, axis_len, inner) = split_axis(&shape, axis);
        let va = self.value(a);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&va[(o * axis_len + start) * inner..(o * axis_len + start + len) * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let rg = self.rg(&[a]);
        Ok(self.push(new_shape, out, Op::Slice { a, outer, axis_len, start, len, inner }, rg))
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("transpose", format!("{shape:?}")));
        }
        let (m, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batch = shape[..shape.len() - 2].iter().product();
        let va = self.value(a);
        let mut out = vec![S::zero(); va.len()];
        for b in 0..batch {
            let (src, dst) = (&va[b * m * n..(b + 1) * m * n], &mut out[b * m * n..(b + 1) * m * n]);
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        let mut new_shape = shape;
        let r = new_shape.len();
        new_shape.swap(r - 2, r - 1);
        let rg = self.rg(&[a]);
        Ok(self.push(new_shape, out, Op::Transpose { a, batch, m, n }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::shape("reshape", format!("{:?} to {shape:?}", self.shape(a))));
        }
        let value = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(a), rg))
    }

    /// Add the first `T` rows of a `[P, E]` position table to each `[T, E]` sequence of a `[B, T, E]` batch.
    pub fn embedding_add(&mut self, a: Var, pos: Var) -> Result<Var> {
        let (sa, sp) = (self.shape(a).to_vec(), self.shape(pos).to_vec());
        if sa.len() != 3 || sp.len() != 2 || sa[2] != sp[1] || sa[1] > sp[0] {
            return Err(Error::shape("embedding_add", format!("{sa:?} + positions {sp:?}")));
        }
        let (t, e) = (sa[1], sa[2]);
        let vp = self.value(pos);
        let value = self.value(a).iter().enumerate().map(|(i, x)| *x + vp[i % (t * e)]).collect();
        let rg = self.rg(&[a, pos]);
        Ok(self.push(sa, value, Op::EmbeddingAdd { a, pos, t, e }, rg))
    }

    /// Replace entries where `mask` is true with `fill`. The mask covers the
    /// last two axes and repeats over the leading ones.
    pub fn masked_fill(&mut self, a: Var, mask: &[bool], fill: S) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let block: usize = shape.iter().rev().take(2).product();
        if shape.len() < 2 || mask.len() != block {
            return Err(Error::shape("masked_fill", format!("mask of {} for {shape:?}", mask.len())));
        }
        let value = self.value(a).iter().enumerate().map(|(i, x)| if mask[i % block] { fill } else { *x }).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, value, Op::MaskedFill { a, mask: mask.to_vec() }, rg))
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and 0/1 `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[S]) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != targets.len() || z.is_empty() {
            return Err(Error::shape("bce_with_logits", format!("{:?} logits, {} targets", self.shape(logits), targets.len())));
        }
        let loss = z
            .iter()
            .zip(targets)
            .map(|(z, y)| {
                let (z, y) = (z.as_f64(), y.as_f64());
                z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
            })
            .sum::<f64>()
            / z.len() as f64;
        let targets = targets.iter().map(|y| y.as_f64()).collect();
        let rg = self.rg(&[logits]);
        Ok(self.push(vec![], vec![S::of(loss)], Op::BceWithLogits { logits, targets }, rg))
    }

    fn acc(&mut self, v: Var) -> &mut Vec<S> {
        // by shape: backward may have temporarily taken the value out
        let len = self.nodes[v.0].shape.iter().product();
        self.grads[v.0].get_or_insert_with(|| vec![S::zero(); len])
    }

    /// Reverse-mode pass from a one-element `loss`. Gradients of every node
    /// that depends on a differentiable leaf become available through
    /// [`Graph::grad`]. A graph can be differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        self.consumed = true;
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[loss.0] = Some(vec![S::one()]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(gy) = self.grads[id].take() else { continue };
            let op = std::mem::replace(&mut self.nodes[id].op, Op::Leaf);
            self.backward_op(id, &op, &gy);
            self.grads[id] = Some(gy);
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_op(&mut self, id: usize, op: &Op, gy: &[S]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, batch, m, k, n, shared } => {
                if self.needs(a) {
                    let bv = std::mem::take(&mut self.nodes[b.0].value);
                    let ga = self.acc(a);
                    if shared {
                        gemm(batch * m, n, k, gy, false, &bv, true, ga, S::one());
                    } else {
                        for i in 0..batch {
                            gemm(m, n, k, &gy[i * m * n..(i + 1) * m * n], false, &bv[i * k * n..(i + 1) * k * n], true, &mut ga[i * m * k..(i + 1) * m * k], S::one());
                        }
                    }
                    self.nodes[b.0].value = bv;
                }
                if self.needs(b) {
                    let av = std::mem::take(&mut self.nodes[a.0].value);
                    let gb = self.acc(b);
                    if shared {
                        gemm(k, batch * m, n, &av, true, gy, false, gb, S::one());
                    } else {
                        for i in 0..batch {
                            gemm(k, m, n, &av[i * m * k..(i + 1) * m * k], true, &gy[i * m * n..(i + 1) * m * n], false, &mut gb[i * k * n..(i + 1) * k * n], S::one());
                        }
                    }
                    self.nodes[a.0].value = av;
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -S::one() } else { S::one() };
                if self.needs(a) {
                    self.acc(a).iter_mut().zip(gy).for_each(|(g, d)| *g += *d);
                }
                if self.needs(b) {
                    self.acc(b).iter_mut().zip(gy).for_each(|(g, d)| *g += sign * *d);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    let bv = std::mem::take(&mut self.nodes[b.0].value);
                    self.acc(a).iter_mut().zip(gy).zip(&bv).for_each(|((g, d), y)| *g += *d * *y);
                    self.nodes[b.0].value = bv;
                }
                if self.needs(b) {
                    let av = std::mem::take(&mut self.nodes[a.0].value);
                    self.acc(b).iter_mut().zip(gy).zip(&av).for_each(|((g, d), x)| *g += *d * *x);
                    self.nodes[a.0].value = av;
                }
            }
            Op::AddBias { a, bias } => {
                if self.needs(a) {
                    self.acc(a).iter_mut().zip(gy).for_each(|(g, d)| *g += *d);
                }
                if self.needs(bias) {
                    let c = self.nodes[bias.0].value.len();
                    let mut sums = vec![0.0f64; c];
                    for (i, d) in gy.iter().enumerate() {
                        sums[i % c] += d.as_f64();
                    }
                    self.acc(bias).iter_mut().zip(&sums).for_each(|(g, s)| *g += S::of(*s));
                }
            }
            Op::Scale(a, c) => {
                let cs = S::of(c);
                self.acc(a).iter_mut().zip(gy).for_each(|(g, d)| *g += *d * cs);
            }
            Op::Relu(a) => {
                let av = std::mem::take(&mut self.nodes[a.0].value);
                self.acc(a).iter_mut().zip(gy).zip(&av).for_each(|((g, d), x)| {
                    if *x > S::zero() {
                        *g += *d
                    }
                });
                self.nodes[a.0].value = av;
            }
            Op::Sigmoid(a) => {
                let y = std::mem::take(&mut self.nodes[id].value);
                self.acc(a).iter_mut().zip(gy).zip(&y).for_each(|((g, d), s)| *g += *d * *s * (S::one() - *s));
                self.nodes[id].value = y;
            }
            Op::Softmax { a, cols } => {
                let y = std::mem::take(&mut self.nodes[id].value);
                let ga = self.acc(a);
                for ((g, d), s) in ga.chunks_mut(cols).zip(gy.chunks(cols)).zip(y.chunks(cols)) {
                    let dot = S::of(d.iter().zip(s).map(|(d, s)| (*d * *s).as_f64()).sum::<f64>());
                    for j in 0..cols {
                        g[j] += s[j] * (d[j] - dot);
                    }
                }
                self.nodes[id].value = y;
            }
            Op::LayerNorm { a, gamma, beta, cols, ref mean, ref rstd } => {
                let av = std::mem::take(&mut self.nodes[a.0].value);
                let gv = self.nodes[gamma.0].value.clone();
                let rows = av.len() / cols;
                let xhat = |r: usize, j: usize| (av[r * cols + j].as_f64() - mean[r]) * rstd[r];
                if self.needs(gamma) || self.needs(beta) {
                    let mut dg = vec![0.0f64; cols];
                    let mut db = vec![0.0f64; cols];
                    for r in 0..rows {
                        for j in 0..cols {
                            let d = gy[r * cols + j].as_f64();
                            dg[j] += d * xhat(r, j);
                            db[j] += d;
                        }
                    }
                    if self.needs(gamma) {
                        self.acc(gamma).iter_mut().zip(&dg).for_each(|(g, s)| *g += S::of(*s));
                    }
                    if self.needs(beta) {
                        self.acc(beta).iter_mut().zip(&db).for_each(|(g, s)| *g += S::of(*s));
                    }
                }
                if self.needs(a) {
                    let mut dx = vec![S::zero(); av.len()];
                    for r in 0..rows {
                        let mut m1 = 0.0f64;
                        let mut m2 = 0.0f64;
                        for j in 0..cols {
                            let dxh = gy[r * cols + j].as_f64() * gv[j].as_f64();
                            m1 += dxh;
                            m2 += dxh * xhat(r, j);
                        }
                        m1 /= cols as f64;
                        m2 /= cols as f64;
                        for j in 0..cols {
                            let dxh = gy[r * cols + j].as_f64() * gv[j].as_f64();
                            dx[r * cols + j] = S::of(rstd[r] * (dxh - m1 - xhat(r, j) * m2));
                        }
                    }
                    self.acc(a).iter_mut().zip(&dx).for_each(|(g, d)| *g += *d);
                }
                self.nodes[a.0].value = av;
            }
            Op::MeanPool { a, outer, len, inner } => {
                let inv = S::of(1.0 / len as f64);
                let ga = self.acc(a);
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            ga[(o * len + l) * inner + i] += gy[o * inner + i] * inv;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let d = gy[0];
                self.acc(a).iter_mut().for_each(|g| *g += d);
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len().max(1);
                let d = gy[0] * S::of(1.0 / n as f64);
                self.acc(a).iter_mut().for_each(|g| *g += d);
            }
            Op::Concat { ref inputs, outer, ref sizes, inner } => {
                let total: usize = sizes.iter().sum();
                let mut offset = 0;
                for (&v, &len) in inputs.iter().zip(sizes) {
                    if self.needs(v) {
                        let gv = self.acc(v);
                        for o in 0..outer {
                            let src = &gy[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            gv[o * len * inner..(o + 1) * len * inner].iter_mut().zip(src).for_each(|(g, d)| *g += *d);
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { a, outer, axis_len, start, len, inner } => {
                let ga = self.acc(a);
                for o in 0..outer {
                    let dst = &mut ga[(o * axis_len + start) * inner..(o * axis_len + start + len) * inner];
                    dst.iter_mut().zip(&gy[o * len * inner..(o + 1) * len * inner]).for_each(|(g, d)| *g += *d);
                }
            }
            Op::Transpose { a, batch, m, n } => {
                let ga = self.acc(a);
                for b in 0..batch {
                    let off = b * m * n;
                    for i in 0..m {
                        for j in 0..n {
                            ga[off + i * n + j] += gy[off + j * m + i];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                self.acc(a).iter_mut().zip(gy).for_each(|(g, d)| *g += *d);
            }
            Op::EmbeddingAdd { a, pos, t, e } => {
                if self.needs(a) {
                    self.acc(a).iter_mut().zip(gy).for_each(|(g, d)| *g += *d);
                }
                if self.needs(pos) {
                    let mut sums = vec![0.0f64; t * e];
                    for (i, d) in gy.iter().enumerate() {
                        sums[i % (t * e)] += d.as_f64();
                    }
                    self.acc(pos).iter_mut().zip(&sums).for_each(|(g, s)| *g += S::of(*s));
                }
            }
            Op::MaskedFill { a, ref mask } => {
                let block = mask.len();
                self.acc(a).iter_mut().zip(gy).enumerate().for_each(|(i, (g, d))| {
                    if !mask[i % block] {
                        *g += *d
                    }
                });
            }
            Op::BceWithLogits { logits, ref targets } => {
                let zv = std::mem::take(&mut self.nodes[logits.0].value);
                let scale = gy[0].as_f64() / targets.len() as f64;
                self.acc(logits).iter_mut().zip(&zv).zip(targets).for_each(|((g, z), y)| {
                    *g += S::of((sigmoid(z.as_f64()) - y) * scale);
                });
                self.nodes[logits.0].value = zv;
            }
        }
    }
}

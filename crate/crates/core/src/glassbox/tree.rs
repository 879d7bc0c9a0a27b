//! Axis-aligned classification tree with weakest-link pruning.
//!
//! Growth is greedy: each node takes the `(feature, threshold)` pair with the
//! largest impurity decrease, scanning features in index order and thresholds
//! in increasing order so the first best split wins. When no split lowers the
//! misclassification count, the split with the largest Gini decrease is taken
//! instead, so nodes keep splitting until they are pure or too small to leave
//! `min_leaf` rows on both sides. The grown tree is then pruned along its
//! cost-complexity sequence, with the penalty chosen on a stratified holdout.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{accuracy, check_width, Classifier};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::sim::shuffle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    /// Training misclassification count.
    #[default]
    Misclassification,
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub min_leaf: usize,
    /// Fraction of rows held out to choose the pruning level; 0 disables pruning.
    pub holdout_fraction: f64,
    pub criterion: SplitCriterion,
    pub seed: u64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { min_leaf: 5, holdout_fraction: 0.25, criterion: SplitCriterion::Misclassification, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node<S> {
    Leaf {
        class: u8,
        probability: S,
        n_samples: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] > threshold` go right.
        threshold: S,
        left: Box<Node<S>>,
        right: Box<Node<S>>,
    },
}

impl<S: Scalar> Node<S> {
    fn leaf_for(&self, row: &[S]) -> &Node<S> {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { .. } => return node,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[*feature] > *threshold { right } else { left };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Features tested anywhere in the tree.
    pub fn split_features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if let Node::Split { feature, left, right, .. } = n {
                out.push(*feature);
                stack.push(left);
                stack.push(right);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeFit<S> {
    pub root: Node<S>,
    pub n_leaves: usize,
    pub n_features: usize,
    /// Complexity penalty of the selected subtree (0 = unpruned).
    pub pruning_alpha: f64,
    pub holdout_accuracy: Option<f64>,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl<S: Scalar> DecisionTreeFit<S> {
    pub fn n_splits(&self) -> usize {
        self.n_leaves - 1
    }

    /// `(class, probability)` of the leaf reached by `row`.
    pub fn leaf(&self, row: &[S]) -> (u8, S) {
        match self.root.leaf_for(row) {
            Node::Leaf { class, probability, .. } => (*class, *probability),
            Node::Split { .. } => unreachable!("leaf_for stops at leaves"),
        }
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }
}

impl<S: Scalar> Classifier<S> for DecisionTreeFit<S> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: ArrayView2<'_, S>) -> Result<Vec<S>> {
        check_width(self.n_features, x.ncols())?;
        let mut row = vec![S::zero(); x.ncols()];
        Ok(x
            .rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
                self.leaf(&row).1
            })
            .collect())
    }

    fn predict(&self, x: ArrayView2<'_, S>) -> Result<Vec<u8>> {
        check_width(self.n_features, x.ncols())?;
        let mut row = vec![S::zero(); x.ncols()];
        Ok(x
            .rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
                self.leaf(&row).0
            })
            .collect())
    }
}

struct ArenaNode<S> {
    counts: [usize; 2],
    split: Option<(usize, S, usize, usize)>,
}

impl<S> ArenaNode<S> {
    fn class(&self) -> u8 {
        (self.counts[1] > self.counts[0]) as u8
    }

    fn errors(&self) -> usize {
        self.counts[0].min(self.counts[1])
    }
}

struct Grower<'a, S> {
    cols: Vec<Vec<S>>,
    sorted: Vec<Vec<usize>>,
    y: &'a [u8],
    opts: &'a TreeOptions,
}

const EPS: f64 = 1e-12;

fn gini_weighted(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c0 as f64 / n, c1 as f64 / n);
    n * (1.0 - p0 * p0 - p1 * p1)
}

impl<S: Scalar> Grower<'_, S> {
    fn impurity(&self, c0: usize, c1: usize) -> f64 {
        match self.opts.criterion {
            SplitCriterion::Misclassification => c0.min(c1) as f64,
            SplitCriterion::Gini => gini_weighted(c0, c1),
        }
    }

    fn best_split(&self, members: &[bool], counts: [usize; 2]) -> Option<(usize, S)> {
        let n = counts[0] + counts[1];
        let min_leaf = self.opts.min_leaf.max(1);
        if n < 2 * min_leaf || counts[0] == 0 || counts[1] == 0 {
            return None;
        }
        let parent = self.impurity(counts[0], counts[1]);
        let parent_gini = gini_weighted(counts[0], counts[1]);
        // (gain, gini fallback, feature, threshold); the fallback only ranks
        // splits whose misclassification gain is zero, so growth can continue
        // to purity while ties among useful splits still go to the first seen
        let mut best: Option<(f64, f64, usize, S)> = None;
        let mut seq: Vec<(S, u8)> = Vec::with_capacity(n);
        for (j, order) in self.sorted.iter().enumerate() {
            seq.clear();
            seq.extend(order.iter().filter(|&&i| members[i]).map(|&i| (self.cols[j][i], self.y[i])));
            let mut left = [0usize; 2];
            for k in 0..n - 1 {
                left[seq[k].1 as usize] += 1;
                let n_left = k + 1;
                if n_left < min_leaf || n - n_left < min_leaf || !(seq[k].0 < seq[k + 1].0) {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let gain = parent - (self.impurity(left[0], left[1]) + self.impurity(right[0], right[1]));
                let fallback = if gain > EPS {
                    0.0
                } else {
                    parent_gini - gini_weighted(left[0], left[1]) - gini_weighted(right[0], right[1])
                };
                if gain <= EPS && fallback <= EPS {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.0 + EPS || ((gain - b.0).abs() <= EPS && fallback > b.1 + EPS),
                };
                if better {
                    let (a, b) = (seq[k].0, seq[k + 1].0);
                    let mut t = a + (b - a) * S::of(0.5);
                    if !(t >= a && t < b) {
                        t = a;
                    }
                    best = Some((gain, fallback, j, t));
                }
            }
        }
        best.map(|(_, _, j, t)| (j, t))
    }

    fn grow(&self, rows: usize) -> Vec<ArenaNode<S>> {
        let mut arena: Vec<ArenaNode<S>> = Vec::new();
        let root_members = vec![true; rows];
        let mut stack: Vec<(usize, Vec<bool>)> = Vec::new();
        arena.push(ArenaNode { counts: count(self.y, &root_members), split: None });
        stack.push((0, root_members));
        while let Some((id, members)) = stack.pop() {
            let counts = arena[id].counts;
            if let Some((feature, threshold)) = self.best_split(&members, counts) {
                let mut left = vec![false; rows];
                let mut right = vec![false; rows];
                for i in 0..rows {
                    if members[i] {
                        if self.cols[feature][i] > threshold {
                            right[i] = true;
                        } else {
                            left[i] = true;
                        }
                    }
                }
                let l = arena.len();
                arena.push(ArenaNode { counts: count(self.y, &left), split: None });
                let r = arena.len();
                arena.push(ArenaNode { counts: count(self.y, &right), split: None });
                arena[id].split = Some((feature, threshold, l, r));
                stack.push((r, right));
                stack.push((l, left));
            }
        }
        arena
    }
}

fn count(y: &[u8], members: &[bool]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for (i, m) in members.iter().enumerate() {
        if *m {
            c[y[i] as usize] += 1;
        }
    }
    c
}

/// `(leaves, errors)` of the subtree at `id`, treating `pruned` nodes as leaves.
fn subtree_stats<S>(arena: &[ArenaNode<S>], pruned: &[bool], id: usize, out: &mut [(usize, usize)]) -> (usize, usize) {
    let stats = match arena[id].split {
        Some((_, _, l, r)) if !pruned[id] => {
            let a = subtree_stats(arena, pruned, l, out);
            let b = subtree_stats(arena, pruned, r, out);
            (a.0 + b.0, a.1 + b.1)
        }
        _ => (1, arena[id].errors()),
    };
    out[id] = stats;
    stats
}

fn arena_predict<S: Scalar>(arena: &[ArenaNode<S>], pruned: &[bool], row: &[S]) -> u8 {
    let mut id = 0;
    loop {
        match arena[id].split {
            Some((f, t, l, r)) if !pruned[id] => id = if row[f] > t { r } else { l },
            _ => return arena[id].class(),
        }
    }
}

fn materialize<S: Scalar>(arena: &[ArenaNode<S>], pruned: &[bool], id: usize) -> Node<S> {
    let node = &arena[id];
    match node.split {
        Some((feature, threshold, l, r)) if !pruned[id] => Node::Split {
            feature,
            threshold,
            left: Box::new(materialize(arena, pruned, l)),
            right: Box::new(materialize(arena, pruned, r)),
        },
        _ => {
            let n = node.counts[0] + node.counts[1];
            Node::Leaf {
                class: node.class(),
                probability: S::of(if n == 0 { 0.5 } else { node.counts[1] as f64 / n as f64 }),
                n_samples: n,
            }
        }
    }
}

type Stages = Vec<(f64, Vec<bool>)>;

/// Grow on `rows` and return the tree with its weakest-link pruning sequence.
/// Stage `k` is optimal for complexity penalties in `[alpha_k, alpha_{k+1})`,
/// with penalties expressed per training row.
fn grow_with_sequence<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8], rows: &[usize], opts: &TreeOptions) -> (Vec<ArenaNode<S>>, Stages) {
    let cols: Vec<Vec<S>> = x.columns().into_iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
    let sorted: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| {
            let mut o: Vec<usize> = (0..c.len()).collect();
            o.sort_by(|&a, &b| c[a].partial_cmp(&c[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
            o
        })
        .collect();
    let y_rows: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
    let grower = Grower { cols, sorted, y: &y_rows, opts };
    let arena = grower.grow(rows.len());

    let n = rows.len() as f64;
    let mut pruned = vec![false; arena.len()];
    let mut stages: Stages = vec![(0.0, pruned.clone())];
    let mut stats = vec![(0usize, 0usize); arena.len()];
    loop {
        subtree_stats(&arena, &pruned, 0, &mut stats);
        let mut gmin = f64::INFINITY;
        let mut g = vec![f64::INFINITY; arena.len()];
        // only nodes reachable through unpruned ancestors are visited
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if let Some((_, _, l, r)) = arena[id].split {
                if !pruned[id] {
                    let (leaves, err) = stats[id];
                    g[id] = (arena[id].errors() as f64 - err as f64) / n / (leaves as f64 - 1.0);
                    gmin = gmin.min(g[id]);
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        if !gmin.is_finite() {
            break;
        }
        for id in 0..arena.len() {
            if g[id] <= gmin + EPS {
                pruned[id] = true;
            }
        }
        stages.push((gmin.max(0.0), pruned.clone()));
    }
    (arena, stages)
}

/// Choose the pruning penalty on a stratified holdout, then prune a tree
/// grown on all rows at that penalty.
///
/// The tree is first grown on a `1 - holdout_fraction` share of the rows; the
/// subtree in its pruning sequence with the best holdout accuracy fixes
/// `alpha` (ties go to fewer leaves). A second tree grown on every row is
/// then cut back to its optimal subtree at `alpha`.
pub fn fit_tree<S: Scalar>(x: ArrayView2<'_, S>, y: &[u8], opts: &TreeOptions) -> Result<DecisionTreeFit<S>> {
    if x.nrows() != y.len() {
        return Err(Error::shape("fit_tree", format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.nrows() < 10 {
        return Err(Error::InvalidArgument("fit_tree needs at least 10 rows".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if !(0.0..1.0).contains(&opts.holdout_fraction) {
        return Err(Error::InvalidArgument("holdout_fraction must lie in [0, 1)".into()));
    }

    let all: Vec<usize> = (0..x.nrows()).collect();
    let (alpha, holdout_accuracy) = if opts.holdout_fraction == 0.0 {
        (0.0, None)
    } else {
        let mut holdout = Vec::new();
        let mut grow_rows = Vec::new();
        let mut r = rng::stream(opts.seed, "tree-holdout");
        for class in 0..=1u8 {
            let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
            shuffle(&mut r, &mut idx);
            let k = (opts.holdout_fraction * idx.len() as f64).round() as usize;
            holdout.extend_from_slice(&idx[..k]);
            grow_rows.extend_from_slice(&idx[k..]);
        }
        grow_rows.sort_unstable();
        holdout.sort_unstable();
        let (arena, stages) = grow_with_sequence(x, y, &grow_rows, opts);

        let y_hold: Vec<u8> = holdout.iter().map(|&i| y[i]).collect();
        let mut row = vec![S::zero(); x.ncols()];
        let mut best: Option<(f64, f64)> = None;
        for (alpha, pr) in &stages {
            let pred: Vec<u8> = holdout
                .iter()
                .map(|&i| {
                    row.iter_mut().zip(x.row(i).iter()).for_each(|(d, s)| *d = *s);
                    arena_predict(&arena, pr, &row)
                })
                .collect();
            let acc = accuracy(&pred, &y_hold);
            // later stages have fewer leaves, so `>=` breaks ties toward smaller trees
            if best.is_none_or(|b| acc >= b.0) {
                best = Some((acc, *alpha));
            }
        }
        let (acc, alpha) = best.expect("at least one stage");
        (alpha, Some(acc))
    };

    let (arena, stages) = grow_with_sequence(x, y, &all, opts);
    let chosen = &stages.iter().rev().find(|(a, _)| *a <= alpha + EPS).expect("stage 0 has alpha 0").1;
    let root = materialize(&arena, chosen, 0);
    Ok(DecisionTreeFit {
        n_leaves: root.n_leaves(),
        root,
        n_features: x.ncols(),
        pruning_alpha: alpha,
        holdout_accuracy,
        feature_names: Vec::new(),
    })
}

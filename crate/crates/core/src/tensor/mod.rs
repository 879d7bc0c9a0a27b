//! Dense row-major tensors and a reverse-mode differentiation tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Leaves are registered
//! from [`Tensor`]s (usually the entries of a [`ParamStore`]), every op
//! appends one node, and [`Graph::backward`] walks the nodes in reverse once.
//! Storage follows the scalar type; sums, softmax normalizers and
//! layer-norm statistics are accumulated in `f64`.

mod adam;
mod graph;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var};

use ndarray::{ArrayD, IxDyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Serialize + serde::de::DeserializeOwned")]
pub struct Tensor<S> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    #[serde(default)]
    pub requires_grad: bool,
    #[serde(skip)]
    pub grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n], requires_grad: false, grad: None }
    }

    pub fn scalar(value: S) -> Self {
        Self { shape: vec![], data: vec![value], requires_grad: false, grad: None }
    }

    /// Gaussian entries with standard deviation `std`.
    pub fn randn<R: rand::Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                S::of(z * std)
            })
            .collect();
        Self { shape: shape.to_vec(), data, requires_grad: false, grad: None }
    }

    pub fn requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() on a tensor with {} elements", self.data.len());
        self.data[0]
    }

    pub fn from_array(a: &ArrayD<S>) -> Self {
        Self { shape: a.shape().to_vec(), data: a.iter().copied().collect(), requires_grad: false, grad: None }
    }

    pub fn to_array(&self) -> ArrayD<S> {
        ArrayD::from_shape_vec(IxDyn(&self.shape), self.data.clone()).expect("shape matches data")
    }
}

/// Named parameters in a fixed order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "S: Serialize + serde::de::DeserializeOwned")]
pub struct ParamStore<S> {
    entries: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Add a trainable parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) {
        assert!(self.index_of(name).is_none(), "duplicate parameter {name}");
        self.entries.push((name.to_string(), tensor.requires_grad()));
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<S>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Register every parameter as a leaf of `graph`, in store order.
    pub fn bind(&self, graph: &mut Graph<S>) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| graph.leaf(t)).collect()
    }
}

#[cfg(test)]
mod tests;

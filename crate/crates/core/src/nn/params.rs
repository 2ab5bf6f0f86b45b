use std::sync::Arc;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    tensors: IndexMap<String, Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        let prev = self.tensors.insert(name.clone(), Arc::new(value));
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    pub fn get(&self, name: &str) -> Result<&Arc<Tensor>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingWeights(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Bind a parameter into a graph as a trainable leaf.
    ///
    /// Panics on unknown names: every architecture registers its parameters
    /// before building graphs, so a miss is a programming error.
    pub fn var(&self, g: &Graph, name: &str) -> Var {
        let t = self
            .tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        g.param(name, Arc::clone(t))
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingWeights(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = Arc::new(value);
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }
}

/// Seeded weight initializer.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-normal weights, `std = gain · sqrt(2 / fan_in)`.
    pub fn he(&mut self, shape: &[usize], fan_in: usize, gain: f32) -> Tensor {
        let std = gain * (2.0 / fan_in as f32).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| dist.sample(&mut self.rng)).collect())
    }

    pub fn normal(&mut self, shape: &[usize], std: f32) -> Tensor {
        let dist = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| dist.sample(&mut self.rng)).collect())
    }

    pub fn conv(&mut self, store: &mut ParamStore, name: &str, cout: usize, cin: usize, k: usize) {
        store.insert(format!("{name}.w"), self.he(&[cout, cin, k, k], cin * k * k, 1.0));
        store.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    /// Convolution with a reduced gain, for output heads that should start
    /// near zero.
    pub fn conv_head(&mut self, store: &mut ParamStore, name: &str, cout: usize, cin: usize, k: usize, gain: f32) {
        store.insert(format!("{name}.w"), self.he(&[cout, cin, k, k], cin * k * k, gain));
        store.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    pub fn linear(&mut self, store: &mut ParamStore, name: &str, fout: usize, fin: usize) {
        store.insert(format!("{name}.w"), self.he(&[fout, fin], fin, 1.0));
        store.insert(format!("{name}.b"), Tensor::zeros(&[fout]));
    }
}

/// A convolution bound to a store by parameter prefix.
#[derive(Clone, Debug)]
pub struct Conv {
    pub name: String,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn new(name: impl Into<String>, stride: usize, pad: usize) -> Self {
        Self {
            name: name.into(),
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Var {
        let w = store.var(g, &format!("{}.w", self.name));
        let b = store.var(g, &format!("{}.b", self.name));
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}

use std::collections::HashMap;

use super::linalg::axpy;
use super::Real;
use crate::graph::HetGraph;
use crate::keyspace::{slot_key, NodeRef};

/// Parameter keys that make up a node's base embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFeatureSpec {
    pub id_key: u64,
    pub slot_keys: Vec<(u32, Vec<u64>)>,
}

impl NodeFeatureSpec {
    pub fn id_only(node: NodeRef) -> Self {
        NodeFeatureSpec { id_key: node.key(), slot_keys: Vec::new() }
    }

    pub fn of(g: &HetGraph, node: NodeRef, use_side_info: bool) -> Self {
        let mut spec = Self::id_only(node);
        if use_side_info {
            spec.slot_keys = g
                .side_info(node)
                .iter()
                .filter(|(_, vals)| !vals.is_empty())
                .map(|(slot, vals)| (*slot, vals.iter().map(|&v| slot_key(*slot, v)).collect()))
                .collect();
        }
        spec
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(self.id_key).chain(self.slot_keys.iter().flat_map(|(_, k)| k.iter().copied()))
    }
}

/// Pulled sparse vectors addressed by key.
#[derive(Debug, Clone)]
pub struct SparseValues<T> {
    dim: usize,
    index: HashMap<u64, usize>,
    data: Vec<T>,
}

impl<T: Real> SparseValues<T> {
    pub fn new(dim: usize) -> Self {
        SparseValues { dim, index: HashMap::new(), data: Vec::new() }
    }

    /// `values` holds `keys.len() * dim` entries in key order.
    pub fn from_flat(dim: usize, keys: &[u64], values: &[f32]) -> Self {
        assert_eq!(values.len(), keys.len() * dim);
        let mut s = Self::new(dim);
        for (k, row) in keys.iter().zip(values.chunks(dim)) {
            s.insert(*k, row.iter().map(|&x| T::of(x as f64)));
        }
        s
    }

    pub fn insert(&mut self, key: u64, row: impl IntoIterator<Item = T>) {
        let at = *self.index.entry(key).or_insert_with(|| {
            self.data.extend(std::iter::repeat_n(T::zero(), self.dim));
            self.data.len() / self.dim - 1
        });
        let dst = &mut self.data[at * self.dim..(at + 1) * self.dim];
        let mut n = 0;
        for (d, s) in dst.iter_mut().zip(row) {
            *d = s;
            n += 1;
        }
        assert_eq!(n, self.dim, "row length must equal dim");
    }

    pub fn get(&self, key: u64) -> &[T] {
        let at = *self.index.get(&key).unwrap_or_else(|| panic!("key {key:#x} was not pulled"));
        &self.data[at * self.dim..(at + 1) * self.dim]
    }

    pub fn get_mut(&mut self, key: u64) -> Option<&mut [T]> {
        let at = *self.index.get(&key)?;
        Some(&mut self.data[at * self.dim..(at + 1) * self.dim])
    }

    pub fn contains(&self, key: u64) -> bool {
        self.index.contains_key(&key)
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.index.keys().copied()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Gradient accumulator for sparse keys; repeated keys sum.
#[derive(Debug, Clone)]
pub struct SparseGrads<T> {
    dim: usize,
    index: HashMap<u64, usize>,
    keys: Vec<u64>,
    data: Vec<T>,
}

impl<T: Real> SparseGrads<T> {
    pub fn new(dim: usize) -> Self {
        SparseGrads { dim, index: HashMap::new(), keys: Vec::new(), data: Vec::new() }
    }

    /// `grad[key] += scale * g`
    pub fn add(&mut self, key: u64, scale: T, g: &[T]) {
        let d = self.dim;
        let at = *self.index.entry(key).or_insert_with(|| {
            self.keys.push(key);
            self.data.extend(std::iter::repeat_n(T::zero(), d));
            self.keys.len() - 1
        });
        axpy(scale, g, &mut self.data[at * d..(at + 1) * d]);
    }

    pub fn get(&self, key: u64) -> Option<&[T]> {
        self.index.get(&key).map(|&at| &self.data[at * self.dim..(at + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn scale(&mut self, a: T) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn merge(&mut self, other: &SparseGrads<T>) {
        for (i, &k) in other.keys.iter().enumerate() {
            self.add(k, T::one(), &other.data[i * other.dim..(i + 1) * other.dim]);
        }
    }

    /// Keys in first-touch order with their summed gradients, flattened.
    pub fn into_parts(self) -> (Vec<u64>, Vec<T>) {
        (self.keys, self.data)
    }
}

/// `h0 = id + sum over slots of mean(slot values)`
pub fn base_embedding<T: Real>(spec: &NodeFeatureSpec, vals: &SparseValues<T>) -> Vec<T> {
    let mut h = vals.get(spec.id_key).to_vec();
    for (_, keys) in &spec.slot_keys {
        if keys.is_empty() {
            continue;
        }
        let w = T::one() / T::of(keys.len() as f64);
        for &k in keys {
            axpy(w, vals.get(k), &mut h);
        }
    }
    h
}

pub fn base_embedding_backward<T: Real>(spec: &NodeFeatureSpec, g: &[T], grads: &mut SparseGrads<T>) {
    grads.add(spec.id_key, T::one(), g);
    for (_, keys) in &spec.slot_keys {
        if keys.is_empty() {
            continue;
        }
        let w = T::one() / T::of(keys.len() as f64);
        for &k in keys {
            grads.add(k, w, g);
        }
    }
}

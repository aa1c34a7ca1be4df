use rand::Rng as _;

use super::{ModelConfig, PhiMode, Real};
use crate::keyspace::{dense_key, DenseMatrix, SHARED_CHANNEL};
use crate::rng::rng_for;

/// GraphSAGE combine weights of one (relation, layer).
#[derive(Debug, Clone, PartialEq)]
pub struct SageWeights<T> {
    pub w_self: Vec<T>,
    pub w_neigh: Vec<T>,
    pub bias: Vec<T>,
}

/// Relation attention of one layer, shared by all relations.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    pub w: Vec<T>,
    pub v: Vec<T>,
}

/// Dense encoder parameters. Sage weights are indexed by
/// `layer * channels + channel position`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub dim: usize,
    pub layers: usize,
    pub channels: usize,
    pub sage: Vec<SageWeights<T>>,
    pub attention: Vec<AttentionWeights<T>>,
}

const DENSE_INIT_TAG: u64 = 0x4445_4e53;

impl<T: Real> DenseParams<T> {
    /// Glorot-uniform matrices, zero biases.
    pub fn init(cfg: &ModelConfig, channels: usize, seed: u64) -> Self {
        let d = cfg.dim;
        let mut rng = rng_for(&[seed, DENSE_INIT_TAG]);
        let glorot = (6.0 / (2.0 * d as f64)).sqrt();
        let mut draw = |n: usize, bound: f64| -> Vec<T> { (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect() };
        let layers = if cfg.kind.is_gnn() { cfg.layers } else { 0 };
        let mut sage = Vec::new();
        if cfg.kind.is_sage() {
            for _ in 0..layers * channels {
                sage.push(SageWeights { w_self: draw(d * d, glorot), w_neigh: draw(d * d, glorot), bias: vec![T::zero(); d] });
            }
        }
        let mut attention = Vec::new();
        if cfg.kind.is_gnn() && cfg.phi == PhiMode::Attention {
            for _ in 0..layers {
                attention.push(AttentionWeights { w: draw(d * d, glorot), v: draw(d, 1.0 / (d as f64).sqrt()) });
            }
        }
        DenseParams { dim: d, layers, channels, sage, attention }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<T>| vec![T::zero(); v.len()];
        DenseParams {
            dim: self.dim,
            layers: self.layers,
            channels: self.channels,
            sage: self.sage.iter().map(|s| SageWeights { w_self: z(&s.w_self), w_neigh: z(&s.w_neigh), bias: z(&s.bias) }).collect(),
            attention: self.attention.iter().map(|a| AttentionWeights { w: z(&a.w), v: z(&a.v) }).collect(),
        }
    }

    pub fn sage(&self, layer: usize, channel: usize) -> Option<&SageWeights<T>> {
        self.sage.get(layer * self.channels + channel)
    }

    pub fn sage_mut(&mut self, layer: usize, channel: usize) -> Option<&mut SageWeights<T>> {
        self.sage.get_mut(layer * self.channels + channel)
    }

    pub fn attention(&self, layer: usize) -> Option<&AttentionWeights<T>> {
        self.attention.get(layer)
    }

    pub fn attention_mut(&mut self, layer: usize) -> Option<&mut AttentionWeights<T>> {
        self.attention.get_mut(layer)
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for s in &self.sage {
            out.extend([&s.w_self[..], &s.w_neigh[..], &s.bias[..]]);
        }
        for a in &self.attention {
            out.extend([&a.w[..], &a.v[..]]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for s in &mut self.sage {
            out.push(&mut s.w_self);
            out.push(&mut s.w_neigh);
            out.push(&mut s.bias);
        }
        for a in &mut self.attention {
            out.push(&mut a.w);
            out.push(&mut a.v);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::linalg::add_into(b, a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> DenseParams<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::of(x.to_f64().unwrap())).collect::<Vec<U>>();
        DenseParams {
            dim: self.dim,
            layers: self.layers,
            channels: self.channels,
            sage: self.sage.iter().map(|s| SageWeights { w_self: c(&s.w_self), w_neigh: c(&s.w_neigh), bias: c(&s.bias) }).collect(),
            attention: self.attention.iter().map(|a| AttentionWeights { w: c(&a.w), v: c(&a.v) }).collect(),
        }
    }

    /// One `(key, row)` record per matrix row or vector.
    pub fn to_records(&self) -> Vec<(u64, Vec<f32>)> {
        let mut out = Vec::new();
        for (key, data) in self.keyed() {
            out.push((key, data.iter().map(|x| x.to_f32().unwrap()).collect()));
        }
        out.sort_by_key(|r| r.0);
        out
    }

    /// Overwrites parameters from checkpoint records. Every row of this
    /// parameter set must be present; returns the number of rows read.
    pub fn load_records(&mut self, records: &std::collections::HashMap<u64, Vec<f32>>) -> Result<usize, String> {
        let d = self.dim;
        let mut rows = 0;
        for (key, data) in self.keyed_mut() {
            let row = records.get(&key).ok_or_else(|| format!("dense checkpoint lacks key {key:#018x}"))?;
            if row.len() != d {
                return Err(format!("dense checkpoint row has dim {}, expected {d}", row.len()));
            }
            for (x, &y) in data.iter_mut().zip(row) {
                *x = T::of(y as f64);
            }
            rows += 1;
        }
        Ok(rows)
    }

    fn row_keys(&self) -> Vec<u64> {
        let d = self.dim as u32;
        let mut keys = Vec::new();
        for i in 0..self.sage.len() {
            let (layer, c) = ((i / self.channels) as u8, (i % self.channels) as u16);
            for r in 0..d {
                keys.push(dense_key(c, layer, DenseMatrix::SageSelf, r));
            }
            for r in 0..d {
                keys.push(dense_key(c, layer, DenseMatrix::SageNeigh, r));
            }
            keys.push(dense_key(c, layer, DenseMatrix::SageBias, 0));
        }
        for layer in 0..self.attention.len() {
            for r in 0..d {
                keys.push(dense_key(SHARED_CHANNEL, layer as u8, DenseMatrix::AttentionW, r));
            }
            keys.push(dense_key(SHARED_CHANNEL, layer as u8, DenseMatrix::AttentionVec, 0));
        }
        keys
    }

    fn keyed(&self) -> Vec<(u64, &[T])> {
        let d = self.dim;
        let rows = self.tensors().into_iter().flat_map(|t| t.chunks(d));
        self.row_keys().into_iter().zip(rows).collect()
    }

    fn keyed_mut(&mut self) -> Vec<(u64, &mut [T])> {
        let d = self.dim;
        let keys = self.row_keys();
        let rows = self.tensors_mut().into_iter().flat_map(|t| t.chunks_mut(d));
        keys.into_iter().zip(rows).collect()
    }
}

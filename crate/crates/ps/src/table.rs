use std::collections::HashMap;
use std::path::Path;

use dashmap::DashMap;

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::init::lazy_init;
use crate::optimizer::{Entry, SparseOptimizer};
use crate::{shard_of, ParamStore, PsError, Result};

/// One partition of the key space. Per-key mutation is atomic: pulls and
/// pushes on the same key serialize on the entry's map slot.
#[derive(Debug)]
pub struct Shard {
    dim: usize,
    init_seed: u64,
    optimizer: SparseOptimizer,
    entries: DashMap<u64, Entry>,
}

impl Shard {
    pub fn new(dim: usize, init_seed: u64, optimizer: SparseOptimizer) -> Self {
        Shard { dim, init_seed, optimizer, entries: DashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: u64) -> bool {
        self.entries.contains_key(&key)
    }

    /// Copies the vector for `key` into `out`, initializing it if needed.
    pub fn pull_into(&self, key: u64, out: &mut [f32]) {
        if let Some(e) = self.entries.get(&key) {
            out.copy_from_slice(&e.value);
            return;
        }
        let e = self
            .entries
            .entry(key)
            .or_insert_with(|| Entry::new(lazy_init(self.init_seed, key, self.dim), &self.optimizer));
        out.copy_from_slice(&e.value);
    }

    pub fn push_one(&self, key: u64, grad: &[f32], lr: f32) {
        let mut e = self
            .entries
            .entry(key)
            .or_insert_with(|| Entry::new(lazy_init(self.init_seed, key, self.dim), &self.optimizer));
        e.apply(&self.optimizer, grad, lr);
    }

    pub fn insert(&self, key: u64, value: Vec<f32>) {
        debug_assert_eq!(value.len(), self.dim);
        self.entries.insert(key, Entry::new(value, &self.optimizer));
    }

    pub fn clear(&self) {
        self.entries.clear();
    }

    /// Snapshot of all entries, sorted by key.
    pub fn entries(&self) -> Vec<(u64, Vec<f32>)> {
        let mut out: Vec<_> = self.entries.iter().map(|e| (*e.key(), e.value().value.clone())).collect();
        out.sort_unstable_by_key(|(k, _)| *k);
        out
    }

    pub fn pull(&self, keys: &[u64]) -> Vec<f32> {
        let mut out = vec![0.0; keys.len() * self.dim];
        let mut first: HashMap<u64, usize> = HashMap::with_capacity(keys.len());
        for (i, &k) in keys.iter().enumerate() {
            let row = i * self.dim;
            match first.get(&k) {
                // Duplicates echo the first occurrence so one call is self-consistent.
                Some(&j) => {
                    let (src, dst) = out.split_at_mut(row);
                    dst[..self.dim].copy_from_slice(&src[j * self.dim..(j + 1) * self.dim]);
                }
                None => {
                    self.pull_into(k, &mut out[row..row + self.dim]);
                    first.insert(k, i);
                }
            }
        }
        out
    }

    pub fn push(&self, keys: &[u64], grads: &[f32], lr: f32) -> Result<()> {
        check_push(keys, grads, self.dim)?;
        for (k, g) in keys.iter().zip(grads.chunks_exact(self.dim)) {
            self.push_one(*k, g, lr);
        }
        Ok(())
    }

    /// Loads the records of `path` that route to shard `index` of `num_shards`.
    /// With `replace` the shard is cleared first.
    pub fn load_routed(&self, path: &Path, index: usize, num_shards: usize, replace: bool) -> Result<u64> {
        let ckpt = read_checkpoint(path)?;
        if ckpt.dim != self.dim {
            return Err(PsError::DimMismatch { expected: self.dim, got: ckpt.dim });
        }
        if replace {
            self.clear();
        }
        let mut n = 0;
        for (k, v) in ckpt.records {
            if shard_of(k, num_shards) == index {
                self.insert(k, v);
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let entries = self.entries();
        write_checkpoint(path, self.dim, entries.iter().map(|(k, v)| (*k, v.as_slice())))
    }
}

pub(crate) fn check_push(keys: &[u64], grads: &[f32], dim: usize) -> Result<()> {
    if grads.len() != keys.len() * dim {
        if !keys.is_empty() && grads.len().is_multiple_of(keys.len()) {
            return Err(PsError::DimMismatch { expected: dim, got: grads.len() / keys.len() });
        }
        return Err(PsError::LengthMismatch { keys: keys.len(), values: grads.len(), dim });
    }
    Ok(())
}

/// In-process table split over `num_shards` [`Shard`]s.
#[derive(Debug)]
pub struct ShardedTable {
    dim: usize,
    shards: Vec<Shard>,
}

impl ShardedTable {
    pub fn new(dim: usize, num_shards: usize, init_seed: u64) -> Self {
        Self::with_optimizer(dim, num_shards, init_seed, SparseOptimizer::Sgd)
    }

    pub fn with_optimizer(dim: usize, num_shards: usize, init_seed: u64, optimizer: SparseOptimizer) -> Self {
        assert!(dim > 0 && num_shards > 0);
        let shards = (0..num_shards).map(|_| Shard::new(dim, init_seed, optimizer)).collect();
        ShardedTable { dim, shards }
    }

    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, key: u64) -> &Shard {
        &self.shards[shard_of(key, self.shards.len())]
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(Shard::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: u64) -> bool {
        self.shard(key).contains(key)
    }

    /// All entries across shards, sorted by key.
    pub fn entries(&self) -> Vec<(u64, Vec<f32>)> {
        let mut all: Vec<_> = self.shards.iter().flat_map(Shard::entries).collect();
        all.sort_unstable_by_key(|(k, _)| *k);
        all
    }

    fn restore(&self, path: &Path, replace: bool) -> Result<u64> {
        let ckpt = read_checkpoint(path)?;
        if ckpt.dim != self.dim {
            return Err(PsError::DimMismatch { expected: self.dim, got: ckpt.dim });
        }
        if replace {
            self.shards.iter().for_each(Shard::clear);
        }
        let n = ckpt.records.len() as u64;
        for (k, v) in ckpt.records {
            self.shard(k).insert(k, v);
        }
        Ok(n)
    }
}

impl ParamStore for ShardedTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pull(&self, keys: &[u64]) -> Result<Vec<f32>> {
        let d = self.dim;
        let mut out = vec![0.0; keys.len() * d];
        let mut first: HashMap<u64, usize> = HashMap::with_capacity(keys.len());
        for (i, &k) in keys.iter().enumerate() {
            match first.get(&k) {
                Some(&j) => {
                    let (src, dst) = out.split_at_mut(i * d);
                    dst[..d].copy_from_slice(&src[j * d..(j + 1) * d]);
                }
                None => {
                    self.shard(k).pull_into(k, &mut out[i * d..(i + 1) * d]);
                    first.insert(k, i);
                }
            }
        }
        Ok(out)
    }

    fn push(&self, keys: &[u64], grads: &[f32], lr: f32) -> Result<()> {
        check_push(keys, grads, self.dim)?;
        for (k, g) in keys.iter().zip(grads.chunks_exact(self.dim)) {
            self.shard(*k).push_one(*k, g, lr);
        }
        Ok(())
    }

    fn save(&self, path: &Path) -> Result<()> {
        let entries = self.entries();
        write_checkpoint(path, self.dim, entries.iter().map(|(k, v)| (*k, v.as_slice())))
    }

    fn load(&self, path: &Path) -> Result<u64> {
        self.restore(path, true)
    }

    fn warm_start(&self, path: &Path) -> Result<u64> {
        self.restore(path, false)
    }
}

//! One batch: forward every distinct encoder input once, apply the loss,
//! and backpropagate into sparse and dense gradients.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::loss::{loss_explicit, loss_inbatch};
use crate::graph::HetGraph;
use crate::keyspace::NodeRef;
use crate::model::{
    base_embedding, base_embedding_backward, DenseParams, EgoForward, ModelConfig, NodeFeatureSpec, Real, SparseGrads,
    SparseValues, Tree,
};
use crate::sample::{EgoGraph, TrainPair};

/// Negatives of a batch, already chosen.
#[derive(Debug, Clone)]
pub enum NegativePlan {
    /// Row `b` is contrasted with the contexts of rows `idx[b]`.
    InBatch(Vec<Vec<usize>>),
    /// Row `b` is contrasted with the base embeddings of these nodes.
    Explicit(Vec<Vec<NodeRef>>),
}

#[derive(Debug, Clone)]
struct Unit {
    tree: Option<Tree>,
    specs: Vec<NodeFeatureSpec>,
}

#[derive(Debug, Clone)]
enum Negs {
    InBatch(Vec<Vec<usize>>),
    Explicit(Vec<Vec<usize>>),
}

/// A batch resolved to encoder units and parameter keys.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    units: Vec<Unit>,
    centers: Vec<usize>,
    contexts: Vec<usize>,
    negs: Negs,
    /// Keys referenced by all rows before deduplication.
    pub key_slots: u64,
    /// Of those, keys referenced only through random negatives.
    pub negative_key_slots: u64,
}

#[derive(Debug, Clone)]
pub struct BatchGrads<T> {
    pub loss: T,
    pub sparse: SparseGrads<T>,
    pub dense: DenseParams<T>,
}

#[derive(PartialEq, Eq, Hash)]
enum UnitKey {
    Node(NodeRef),
    Ego(usize),
}

struct Builder<'a> {
    g: &'a HetGraph,
    cfg: &'a ModelConfig,
    units: Vec<Unit>,
    seen: HashMap<UnitKey, usize>,
    // Keeps shared egos alive so pointer identity stays unique.
    _egos: Vec<Arc<EgoGraph>>,
}

impl Builder<'_> {
    fn node(&mut self, v: NodeRef) -> usize {
        let (g, side) = (self.g, self.cfg.use_side_info);
        let units = &mut self.units;
        *self.seen.entry(UnitKey::Node(v)).or_insert_with(|| {
            units.push(Unit { tree: None, specs: vec![NodeFeatureSpec::of(g, v, side)] });
            units.len() - 1
        })
    }

    fn endpoint(&mut self, v: NodeRef, ego: &Option<Arc<EgoGraph>>) -> usize {
        match ego {
            Some(e) if self.cfg.kind.is_gnn() => {
                let key = UnitKey::Ego(Arc::as_ptr(e) as usize);
                if let Some(&u) = self.seen.get(&key) {
                    return u;
                }
                let tree = Tree::from_ego(e);
                let specs = tree.nodes.iter().map(|&n| NodeFeatureSpec::of(self.g, n, self.cfg.use_side_info)).collect();
                self.units.push(Unit { tree: Some(tree), specs });
                self._egos.push(e.clone());
                self.seen.insert(key, self.units.len() - 1);
                self.units.len() - 1
            }
            _ => self.node(v),
        }
    }
}

impl PreparedBatch {
    pub fn new(g: &HetGraph, cfg: &ModelConfig, pairs: &[TrainPair], negatives: NegativePlan) -> Self {
        let mut b = Builder { g, cfg, units: Vec::new(), seen: HashMap::new(), _egos: Vec::new() };
        let mut centers = Vec::with_capacity(pairs.len());
        let mut contexts = Vec::with_capacity(pairs.len());
        for p in pairs {
            centers.push(b.endpoint(p.center, &p.center_ego));
            contexts.push(b.endpoint(p.context, &p.context_ego));
        }
        let negs = match negatives {
            NegativePlan::InBatch(idx) => Negs::InBatch(idx),
            NegativePlan::Explicit(nodes) => {
                Negs::Explicit(nodes.iter().map(|row| row.iter().map(|&w| b.node(w)).collect()).collect())
            }
        };
        let units = b.units;
        let slots = |u: usize| units[u].specs.iter().map(|s| s.keys().count() as u64).sum::<u64>();
        let mut key_slots: u64 = centers.iter().chain(&contexts).map(|&u| slots(u)).sum();
        let mut negative_key_slots = 0;
        if let Negs::Explicit(rows) = &negs {
            negative_key_slots = rows.iter().flatten().map(|&u| slots(u)).sum();
            key_slots += negative_key_slots;
        }
        PreparedBatch { units, centers, contexts, negs, key_slots, negative_key_slots }
    }

    pub fn rows(&self) -> usize {
        self.centers.len()
    }

    /// Every sparse key the batch touches, deduplicated and sorted.
    pub fn unique_keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self.units.iter().flat_map(|u| u.specs.iter().flat_map(|s| s.keys())).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    fn encode<T: Real>(&self, cfg: &ModelConfig, vals: &SparseValues<T>, params: &DenseParams<T>) -> Vec<(Vec<T>, Option<EgoForward<T>>)> {
        self.units
            .par_iter()
            .map(|u| {
                let h0: Vec<Vec<T>> = u.specs.iter().map(|s| base_embedding(s, vals)).collect();
                match &u.tree {
                    Some(tree) => {
                        let f = EgoForward::run(tree.clone(), h0, cfg, params);
                        (f.output().to_vec(), Some(f))
                    }
                    None => (h0.into_iter().next().unwrap(), None),
                }
            })
            .collect()
    }

    /// Mean loss over rows and its output gradient per unit.
    fn loss_and_output_grads<T: Real>(&self, outs: &[&[T]]) -> (T, Vec<Option<Vec<T>>>) {
        let d = outs.first().map_or(0, |o| o.len());
        let mut g: Vec<Option<Vec<T>>> = vec![None; self.units.len()];
        let mut add = |u: usize, v: &[T], s: T| {
            let slot = g[u].get_or_insert_with(|| vec![T::zero(); d]);
            crate::model::linalg::axpy(s, v, slot);
        };
        let b = self.rows();
        if b == 0 {
            return (T::zero(), g);
        }
        match &self.negs {
            Negs::InBatch(idx) => {
                let c: Vec<&[T]> = self.centers.iter().map(|&u| outs[u]).collect();
                let x: Vec<&[T]> = self.contexts.iter().map(|&u| outs[u]).collect();
                let bl = loss_inbatch(&c, &x, idx);
                for row in 0..b {
                    add(self.centers[row], &bl.g_centers[row], T::one());
                    add(self.contexts[row], &bl.g_contexts[row], T::one());
                }
                (bl.loss, g)
            }
            Negs::Explicit(rows) => {
                let inv = T::one() / T::of(b as f64);
                let mut loss = T::zero();
                for row in 0..b {
                    let negs: Vec<&[T]> = rows[row].iter().map(|&u| outs[u]).collect();
                    let pl = loss_explicit(outs[self.centers[row]], outs[self.contexts[row]], &negs);
                    loss += pl.loss;
                    add(self.centers[row], &pl.g_v, inv);
                    add(self.contexts[row], &pl.g_u, inv);
                    for (&u, gw) in rows[row].iter().zip(&pl.g_neg) {
                        add(u, gw, inv);
                    }
                }
                (loss * inv, g)
            }
        }
    }

    /// Smallest |pre-activation| of any Sage layer in the batch.
    pub fn min_abs_preactivation<T: Real>(&self, cfg: &ModelConfig, vals: &SparseValues<T>, params: &DenseParams<T>) -> Option<T> {
        self.encode(cfg, vals, params).iter().filter_map(|e| e.1.as_ref()?.min_abs_preactivation()).reduce(T::min)
    }

    /// Forward only.
    pub fn loss<T: Real>(&self, cfg: &ModelConfig, vals: &SparseValues<T>, params: &DenseParams<T>) -> T {
        let enc = self.encode(cfg, vals, params);
        let outs: Vec<&[T]> = enc.iter().map(|e| e.0.as_slice()).collect();
        self.loss_and_output_grads(&outs).0
    }

    pub fn compute<T: Real>(&self, cfg: &ModelConfig, vals: &SparseValues<T>, params: &DenseParams<T>) -> BatchGrads<T> {
        const CHUNK: usize = 64;
        let enc = self.encode(cfg, vals, params);
        let outs: Vec<&[T]> = enc.iter().map(|e| e.0.as_slice()).collect();
        let (loss, g_out) = self.loss_and_output_grads(&outs);
        let work: Vec<usize> = (0..self.units.len()).filter(|&u| g_out[u].is_some()).collect();
        let parts: Vec<(SparseGrads<T>, DenseParams<T>)> = work
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut sparse = SparseGrads::new(vals.dim());
                let mut dense = params.zeros_like();
                for &u in chunk {
                    let g = g_out[u].as_deref().unwrap();
                    let unit = &self.units[u];
                    match &enc[u].1 {
                        Some(f) => {
                            let g_h0 = f.backward(g, cfg, params, &mut dense);
                            for (spec, gx) in unit.specs.iter().zip(&g_h0) {
                                base_embedding_backward(spec, gx, &mut sparse);
                            }
                        }
                        None => base_embedding_backward(&unit.specs[0], g, &mut sparse),
                    }
                }
                (sparse, dense)
            })
            .collect();
        let mut sparse = SparseGrads::new(vals.dim());
        let mut dense = params.zeros_like();
        for (s, d) in &parts {
            sparse.merge(s);
            dense.add_assign(d);
        }
        BatchGrads { loss, sparse, dense }
    }
}

//! Turning walks into training pairs.
//!
//! Pairs come from a sliding window over each walk. For GNN models every pair
//! endpoint also needs a relation-wise ego graph. Two generation orders are
//! supported:
//!
//! * [`PairOrder::PairFirst`]: enumerate pairs, then sample an ego graph for
//!   each endpoint of each pair (`2 * |pairs|` samples per walk).
//! * [`PairOrder::EgoFirst`]: sample one ego graph per walk position and let
//!   all pairs of that walk share them (`|walk|` samples).
//!
//! Both orders emit the same multiset of (center, context) node pairs.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::index;

use crate::graph::HetGraph;
use crate::keyspace::NodeRef;
use crate::rng::{rng_for, Rng};
use crate::walk::Path;

/// All ordered position pairs `(i, j)` with `1 <= |i - j| <= win_size`,
/// ascending by `i` then `j`.
pub fn gen_pairs(len: usize, win_size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..len {
        let lo = i.saturating_sub(win_size);
        let hi = (i + win_size).min(len.saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                out.push((i, j));
            }
        }
    }
    out
}

/// Sampled neighborhood of the center under one relation channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationEgo {
    /// Graph channel id.
    pub channel: usize,
    /// Nodes layer by layer; `nodes[0]` is the center.
    pub nodes: Vec<NodeRef>,
    /// Layer `k` is `nodes[layer_offsets[k]..layer_offsets[k + 1]]`.
    pub layer_offsets: Vec<usize>,
    /// `(parent position, child position)`, parent in the previous layer.
    pub edges: Vec<(u32, u32)>,
}

impl RelationEgo {
    pub fn layer(&self, k: usize) -> &[NodeRef] {
        &self.nodes[self.layer_offsets[k]..self.layer_offsets[k + 1]]
    }

    pub fn depth(&self) -> usize {
        self.layer_offsets.len() - 2
    }

    /// Layer index of a node position.
    pub fn layer_of(&self, pos: usize) -> usize {
        self.layer_offsets.partition_point(|&o| o <= pos) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoGraph {
    pub center: NodeRef,
    /// One entry per sampled channel, in sampler order.
    pub per_relation: Vec<RelationEgo>,
    pub depth: usize,
    pub fanouts: Vec<usize>,
}

impl EgoGraph {
    pub fn node_count(&self) -> usize {
        1 + self.per_relation.iter().map(|r| r.nodes.len() - 1).sum::<usize>()
    }
}

/// Samples one ego graph. At hop `k` every frontier node draws
/// `min(fanouts[k-1], degree)` distinct neighbor slots uniformly without
/// replacement, along whichever direction of the channel leaves its type;
/// a channel with no such direction contributes nothing. Nodes may repeat
/// across branches.
pub fn sample_ego(g: &HetGraph, v: NodeRef, channels: &[usize], fanouts: &[usize], rng: &mut Rng) -> EgoGraph {
    assert!(!fanouts.is_empty(), "fanouts must be non-empty");
    let per_relation = channels
        .iter()
        .map(|&c| {
            let mut nodes = vec![v];
            let mut layer_offsets = vec![0, 1];
            let mut edges = Vec::new();
            for &fanout in fanouts {
                let (lo, hi) = (layer_offsets[layer_offsets.len() - 2], layer_offsets[layer_offsets.len() - 1]);
                for p in lo..hi {
                    let node = nodes[p];
                    let Some(dir) = g.channel_direction(c, node.type_ord()) else { continue };
                    let neigh = g.neighbors_by_id(dir, node.index());
                    let take = fanout.min(neigh.len());
                    if take == 0 {
                        continue;
                    }
                    let dst_t = g.dst_type_of(dir);
                    for i in index::sample(rng, neigh.len(), take) {
                        edges.push((p as u32, nodes.len() as u32));
                        nodes.push(NodeRef::new(dst_t, neigh[i]));
                    }
                }
                layer_offsets.push(nodes.len());
            }
            RelationEgo { channel: c, nodes, layer_offsets, edges }
        })
        .collect();
    EgoGraph { center: v, per_relation, depth: fanouts.len(), fanouts: fanouts.to_vec() }
}

/// Ego sampler bound to a channel list, counting its invocations.
#[derive(Debug, Clone)]
pub struct EgoSampler {
    pub channels: Vec<usize>,
    pub fanouts: Vec<usize>,
    counter: Arc<AtomicU64>,
}

impl EgoSampler {
    pub fn new(channels: Vec<usize>, fanouts: Vec<usize>, counter: Arc<AtomicU64>) -> Self {
        EgoSampler { channels, fanouts, counter }
    }

    pub fn sample(&self, g: &HetGraph, v: NodeRef, rng: &mut Rng) -> EgoGraph {
        self.counter.fetch_add(1, Ordering::Relaxed);
        sample_ego(g, v, &self.channels, &self.fanouts, rng)
    }

    pub fn samples_taken(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOrder {
    PairFirst,
    EgoFirst,
}

impl std::str::FromStr for PairOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pair_first" => Ok(PairOrder::PairFirst),
            "ego_first" => Ok(PairOrder::EgoFirst),
            _ => Err(format!("unknown order {s:?}; expected pair_first or ego_first")),
        }
    }
}

/// Generation order plus the shared count of ego samples taken under it.
#[derive(Debug, Clone)]
pub struct PipelineOrder {
    pub mode: PairOrder,
    pub ego_sample_counter: Arc<AtomicU64>,
}

impl PipelineOrder {
    pub fn new(mode: PairOrder) -> Self {
        PipelineOrder { mode, ego_sample_counter: Arc::new(AtomicU64::new(0)) }
    }

    pub fn sampler(&self, channels: Vec<usize>, fanouts: Vec<usize>) -> EgoSampler {
        EgoSampler::new(channels, fanouts, self.ego_sample_counter.clone())
    }

    pub fn ego_samples(&self) -> u64 {
        self.ego_sample_counter.load(Ordering::Relaxed)
    }
}

/// A positive (center, context) sample. Ego graphs are absent for
/// walk-only models.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub center: NodeRef,
    pub context: NodeRef,
    pub center_ego: Option<Arc<EgoGraph>>,
    pub context_ego: Option<Arc<EgoGraph>>,
    pub path_id: u64,
    pub positions: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub win_size: usize,
    pub fanouts: Vec<usize>,
    pub order: PairOrder,
    pub batch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { win_size: 2, fanouts: vec![10, 10], order: PairOrder::EgoFirst, batch_size: 1000 }
    }
}

const EGO_TAG: u64 = 0x4547_4f53;

/// Batches of training pairs from a walk stream. The final partial batch is
/// emitted.
pub struct BatchStream<'g, I> {
    graph: &'g HetGraph,
    walks: I,
    win_size: usize,
    batch_size: usize,
    order: PairOrder,
    sampler: Option<EgoSampler>,
    seed: u64,
    pending: VecDeque<TrainPair>,
}

impl<'g, I: Iterator<Item = Path>> BatchStream<'g, I> {
    /// `sampler == None` skips ego sampling (walk-only models).
    pub fn new(graph: &'g HetGraph, walks: I, cfg: &PipelineConfig, sampler: Option<EgoSampler>, seed: u64) -> Self {
        assert!(cfg.batch_size >= 1 && cfg.win_size >= 1);
        BatchStream {
            graph,
            walks,
            win_size: cfg.win_size,
            batch_size: cfg.batch_size,
            order: cfg.order,
            sampler,
            seed,
            pending: VecDeque::new(),
        }
    }

    fn expand(&mut self, path: Path) {
        let pairs = gen_pairs(path.nodes.len(), self.win_size);
        if pairs.is_empty() {
            return;
        }
        let make = |i: usize, j: usize, ci, cj| TrainPair {
            center: path.nodes[i],
            context: path.nodes[j],
            center_ego: ci,
            context_ego: cj,
            path_id: path.id,
            positions: (i as u32, j as u32),
        };
        let Some(sampler) = &self.sampler else {
            self.pending.extend(pairs.into_iter().map(|(i, j)| make(i, j, None, None)));
            return;
        };
        let mut rng = rng_for(&[self.seed, path.id, EGO_TAG]);
        match self.order {
            PairOrder::EgoFirst => {
                let egos: Vec<Arc<EgoGraph>> =
                    path.nodes.iter().map(|&v| Arc::new(sampler.sample(self.graph, v, &mut rng))).collect();
                for (i, j) in pairs {
                    self.pending.push_back(make(i, j, Some(egos[i].clone()), Some(egos[j].clone())));
                }
            }
            PairOrder::PairFirst => {
                for (i, j) in pairs {
                    let a = Arc::new(sampler.sample(self.graph, path.nodes[i], &mut rng));
                    let b = Arc::new(sampler.sample(self.graph, path.nodes[j], &mut rng));
                    self.pending.push_back(make(i, j, Some(a), Some(b)));
                }
            }
        }
    }
}

impl<I: Iterator<Item = Path>> Iterator for BatchStream<'_, I> {
    type Item = Vec<TrainPair>;

    fn next(&mut self) -> Option<Vec<TrainPair>> {
        while self.pending.len() < self.batch_size {
            match self.walks.next() {
                Some(p) => self.expand(p),
                None => break,
            }
        }
        if self.pending.is_empty() {
            return None;
        }
        let n = self.batch_size.min(self.pending.len());
        Some(self.pending.drain(..n).collect())
    }
}

/// Entry point matching the pipeline stage: walks in, pair batches out.
pub fn stream_training_batches<'g, I: Iterator<Item = Path>>(
    graph: &'g HetGraph,
    walks: I,
    cfg: &PipelineConfig,
    order: &PipelineOrder,
    channels: Option<Vec<usize>>,
    seed: u64,
) -> BatchStream<'g, I> {
    let sampler = channels.map(|c| order.sampler(c, cfg.fanouts.clone()));
    let cfg = PipelineConfig { order: order.mode, ..cfg.clone() };
    BatchStream::new(graph, walks, &cfg, sampler, seed)
}

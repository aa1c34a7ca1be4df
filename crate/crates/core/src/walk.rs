//! Metapath-guided random walks.
//!
//! A metapath such as `"u2click2i - i2click2u"` names a cycle of relations.
//! A walk starts at a node of the first relation's source type and, at step
//! `t`, moves to a uniformly chosen neighbor under relation
//! `steps[t % steps.len()]`, stopping early at the first dead end.

use std::io::{self, Write};
use std::sync::Arc;
use std::thread;

use crossbeam_channel::{bounded, Receiver};
use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::graph::{parse_edge_type, EdgeType, GraphError, HetGraph};
use crate::keyspace::NodeRef;
use crate::rng::rng_for;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WalkError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("metapath is empty")]
    Empty,
    #[error("metapath step {0:?} is not a registered edge type")]
    UnknownRelation(String),
    #[error("metapath steps {left:?} and {right:?} do not chain: {left_dst:?} != {right_src:?}")]
    ChainMismatch { left: String, right: String, left_dst: String, right_src: String },
    #[error("metapath does not close: last step ends at {last_dst:?}, first starts at {first_src:?}")]
    CycleMismatch { last_dst: String, first_src: String },
    #[error("walk length must be at least 1")]
    ZeroLength,
    #[error("metapath {0:?} starts at a node type with no nodes")]
    NoStartNodes(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPath {
    pub steps: Vec<EdgeType>,
    pub name: String,
}

/// Parses `"r1 - r2 - ..."` against the registered edge types.
pub fn parse_metapath(spec: &str, schema: &[EdgeType]) -> Result<MetaPath, WalkError> {
    let mut steps = Vec::new();
    for part in spec.split('-').map(str::trim) {
        if part.is_empty() {
            return Err(WalkError::Empty);
        }
        let t = parse_edge_type(part)?;
        let name = t.name();
        let found = schema
            .iter()
            .find(|s| s.name() == name)
            .or_else(|| schema.iter().find(|s| s.symmetric && s.reversed().name() == name).map(|_| &t))
            .ok_or_else(|| WalkError::UnknownRelation(part.into()))?;
        steps.push(EdgeType { symmetric: found.symmetric, ..t });
    }
    for w in steps.windows(2) {
        if w[0].dst_type != w[1].src_type {
            return Err(WalkError::ChainMismatch {
                left: w[0].name(),
                right: w[1].name(),
                left_dst: w[0].dst_type.clone(),
                right_src: w[1].src_type.clone(),
            });
        }
    }
    let (first, last) = (&steps[0], &steps[steps.len() - 1]);
    if last.dst_type != first.src_type {
        return Err(WalkError::CycleMismatch { last_dst: last.dst_type.clone(), first_src: first.src_type.clone() });
    }
    let name = steps.iter().map(EdgeType::name).collect::<Vec<_>>().join(" - ");
    Ok(MetaPath { steps, name })
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub metapaths: Vec<MetaPath>,
    pub walk_len: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

/// One emitted walk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    /// Unique within a run: `epoch * tasks_per_epoch + task ordinal`.
    pub id: u64,
    pub metapath: usize,
    pub nodes: Vec<NodeRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkTask {
    pub metapath: u32,
    pub start: u64,
    pub rep: u32,
    pub ordinal: u64,
}

/// Metapaths resolved against one graph. Owns no graph reference, so it can
/// be shipped to worker threads next to an `Arc<HetGraph>`.
#[derive(Debug, Clone)]
pub struct WalkPlan {
    relations: Vec<Vec<usize>>,
    start_types: Vec<u16>,
    names: Vec<String>,
    walk_len: usize,
    walks_per_node: usize,
    seed: u64,
    start_counts: Vec<u64>,
}

const SHUFFLE_TAG: u64 = 0x5348_5546;

impl WalkPlan {
    pub fn new(graph: &HetGraph, cfg: &WalkConfig) -> Result<Self, WalkError> {
        if cfg.walk_len == 0 {
            return Err(WalkError::ZeroLength);
        }
        let mut relations = Vec::new();
        let mut start_types = Vec::new();
        let mut start_counts = Vec::new();
        for m in &cfg.metapaths {
            let ids = m
                .steps
                .iter()
                .map(|s| graph.relation_id(&s.name()).ok_or_else(|| WalkError::UnknownRelation(s.name())))
                .collect::<Result<Vec<_>, _>>()?;
            if ids.is_empty() {
                return Err(WalkError::Empty);
            }
            let t = graph.src_type_of(ids[0]);
            if graph.node_count(t) == 0 {
                return Err(WalkError::NoStartNodes(m.name.clone()));
            }
            start_types.push(t);
            start_counts.push(graph.node_count(t));
            relations.push(ids);
        }
        Ok(WalkPlan {
            relations,
            start_types,
            names: cfg.metapaths.iter().map(|m| m.name.clone()).collect(),
            walk_len: cfg.walk_len,
            walks_per_node: cfg.walks_per_node,
            seed: cfg.seed,
            start_counts,
        })
    }

    pub fn metapath_name(&self, m: usize) -> &str {
        &self.names[m]
    }

    pub fn walk_len(&self) -> usize {
        self.walk_len
    }

    pub fn tasks_per_epoch(&self) -> u64 {
        self.start_counts.iter().sum::<u64>() * self.walks_per_node as u64
    }

    /// Every (metapath, start node, repetition) of an epoch, shuffled.
    pub fn tasks(&self, epoch: u64) -> Vec<WalkTask> {
        let mut tasks = Vec::with_capacity(self.tasks_per_epoch() as usize);
        let mut ordinal = 0;
        for (m, &count) in self.start_counts.iter().enumerate() {
            for start in 0..count {
                for rep in 0..self.walks_per_node {
                    tasks.push(WalkTask { metapath: m as u32, start, rep: rep as u32, ordinal });
                    ordinal += 1;
                }
            }
        }
        tasks.shuffle(&mut rng_for(&[self.seed, epoch, SHUFFLE_TAG]));
        tasks
    }

    /// Runs one walk. The RNG depends only on the seed and the task, not on
    /// which worker runs it.
    pub fn walk(&self, graph: &HetGraph, epoch: u64, task: WalkTask) -> Path {
        let m = task.metapath as usize;
        let steps = &self.relations[m];
        let mut rng = rng_for(&[self.seed, epoch, task.metapath as u64, task.start, task.rep as u64]);
        let mut cur = NodeRef::new(self.start_types[m], task.start);
        let mut nodes = Vec::with_capacity(self.walk_len);
        nodes.push(cur);
        for t in 0..self.walk_len - 1 {
            let r = steps[t % steps.len()];
            let neigh = graph.neighbors_by_id(r, cur.index());
            if neigh.is_empty() {
                break;
            }
            cur = NodeRef::new(graph.dst_type_of(r), neigh[rng.gen_range(0..neigh.len())]);
            nodes.push(cur);
        }
        Path { id: epoch * self.tasks_per_epoch() + task.ordinal, metapath: m, nodes }
    }

    /// Serial stream of one epoch's walks.
    pub fn epoch<'a>(&'a self, graph: &'a HetGraph, epoch: u64) -> impl Iterator<Item = Path> + 'a {
        self.tasks(epoch).into_iter().map(move |t| self.walk(graph, epoch, t))
    }

    /// Walks of one epoch produced by `workers` threads into a bounded queue.
    /// Arrival order varies; the multiset of paths does not.
    pub fn spawn_epoch(self: &Arc<Self>, graph: Arc<HetGraph>, epoch: u64, workers: usize, capacity: usize) -> Receiver<Path> {
        let (tx, rx) = bounded(capacity.max(1));
        let tasks = Arc::new(self.tasks(epoch));
        let workers = workers.max(1);
        for w in 0..workers {
            let (tx, tasks, graph, plan) = (tx.clone(), tasks.clone(), graph.clone(), self.clone());
            thread::spawn(move || {
                for t in tasks.iter().skip(w).step_by(workers) {
                    if tx.send(plan.walk(&graph, epoch, *t)).is_err() {
                        return;
                    }
                }
            });
        }
        rx
    }
}

/// Convenience: all walks of epoch 0, serially.
pub fn generate_walks(graph: &HetGraph, cfg: &WalkConfig) -> Result<Vec<Path>, WalkError> {
    let plan = WalkPlan::new(graph, cfg)?;
    Ok(plan.epoch(graph, 0).collect())
}

/// Debug dump: `metapath name \t space-separated external ids`.
pub fn write_walks<W: Write>(w: &mut W, graph: &HetGraph, plan: &WalkPlan, paths: &[Path]) -> io::Result<()> {
    for p in paths {
        let ids: Vec<&str> = p.nodes.iter().map(|n| graph.external_id(*n)).collect();
        writeln!(w, "{}\t{}", plan.metapath_name(p.metapath), ids.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EdgeRecord};

    fn schema() -> Vec<EdgeType> {
        vec![
            parse_edge_type("u2click2i").unwrap().with_symmetric(true),
            parse_edge_type("u2buy2i").unwrap().with_symmetric(true),
        ]
    }

    #[test]
    fn parse_examples() {
        let m = parse_metapath("u2click2i - i2click2u", &schema()).unwrap();
        assert_eq!(m.steps.len(), 2);
        assert_eq!(m.name, "u2click2i - i2click2u");
        let homo = vec![parse_edge_type("u2u").unwrap()];
        assert_eq!(parse_metapath("u2u - u2u", &homo).unwrap().steps.len(), 2);
        assert!(matches!(parse_metapath("u2click2i - u2buy2i", &schema()), Err(WalkError::ChainMismatch { .. })));
        assert!(matches!(parse_metapath("u2click2i", &schema()), Err(WalkError::CycleMismatch { .. })));
        assert!(matches!(parse_metapath("u2like2i - i2like2u", &schema()), Err(WalkError::UnknownRelation(_))));
        assert!(matches!(parse_metapath("u2click2i -", &schema()), Err(WalkError::Empty)));
    }

    #[test]
    fn forced_path() {
        let g = build_graph(&schema(), &[EdgeRecord::new("u2click2i", "u1", "i1")], &[]).unwrap();
        let m = parse_metapath("u2click2i - i2click2u", g.relations()).unwrap();
        let cfg = WalkConfig { metapaths: vec![m], walk_len: 5, walks_per_node: 1, seed: 3 };
        let walks = generate_walks(&g, &cfg).unwrap();
        let u = g.lookup("u", "u1").unwrap();
        let i = g.lookup("i", "i1").unwrap();
        assert_eq!(walks[0].nodes, vec![u, i, u, i, u]);
    }

    #[test]
    fn dead_end_truncates() {
        let edges = [EdgeRecord::new("u2buy2i", "u1", "i1"), EdgeRecord::new("u2click2i", "u2", "i1")];
        let g = build_graph(&schema(), &edges, &[]).unwrap();
        let m = parse_metapath("u2click2i - i2click2u", g.relations()).unwrap();
        let cfg = WalkConfig { metapaths: vec![m], walk_len: 4, walks_per_node: 1, seed: 0 };
        let walks = generate_walks(&g, &cfg).unwrap();
        let u1 = g.lookup("u", "u1").unwrap();
        assert!(walks.iter().any(|w| w.nodes == vec![u1]));
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let mut edges = Vec::new();
        for u in 0..20 {
            for i in 0..5 {
                edges.push(EdgeRecord::new("u2click2i", &format!("u{u}"), &format!("i{}", (u * 7 + i * 3) % 13)));
            }
        }
        let g = Arc::new(build_graph(&schema(), &edges, &[]).unwrap());
        let m = parse_metapath("u2click2i - i2click2u", g.relations()).unwrap();
        let cfg = WalkConfig { metapaths: vec![m], walk_len: 6, walks_per_node: 3, seed: 99 };
        let a = generate_walks(&g, &cfg).unwrap();
        let b = generate_walks(&g, &cfg).unwrap();
        assert_eq!(a, b);
        let plan = Arc::new(WalkPlan::new(&g, &cfg).unwrap());
        let mut par: Vec<Path> = plan.spawn_epoch(g.clone(), 0, 4, 8).iter().collect();
        let mut ser = a.clone();
        par.sort();
        ser.sort();
        assert_eq!(par, ser);
        assert_eq!(a.len(), 60);
    }

    #[test]
    fn debug_dump() {
        let g = build_graph(&schema(), &[EdgeRecord::new("u2click2i", "u1", "i1")], &[]).unwrap();
        let m = parse_metapath("u2click2i - i2click2u", g.relations()).unwrap();
        let cfg = WalkConfig { metapaths: vec![m], walk_len: 3, walks_per_node: 1, seed: 0 };
        let plan = WalkPlan::new(&g, &cfg).unwrap();
        let paths: Vec<_> = plan.epoch(&g, 0).collect();
        let mut out = Vec::new();
        write_walks(&mut out, &g, &plan, &paths).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "u2click2i - i2click2u\tu1 i1 u1\n");
    }
}

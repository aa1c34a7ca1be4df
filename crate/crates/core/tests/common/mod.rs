#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use hetrec_core::eval::{evaluate, ground_truth, EmbeddingMatrix, EvalConfig, EvalData, GroundTruth, Strategy};
use hetrec_core::graph::build_graph;
use hetrec_core::model::ModelConfig;
use hetrec_core::rng::rng_for;
use hetrec_core::sample::PipelineConfig;
use hetrec_core::train::{TrainConfig, TrainStats, Trainer};
use hetrec_core::walk::{parse_metapath, WalkConfig};
use hetrec_core::{parse_edge_type, EdgeRecord, EdgeType, HetGraph, NodeRef};
use hetrec_ps::ParamStore;
use rand::Rng;

/// Bipartite stochastic block model split into train / val / test edges.
pub struct Sbm {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

impl Sbm {
    /// Users and items are assigned to blocks round-robin by index.
    pub fn generate(users: usize, items: usize, blocks: usize, p_in: f64, p_out: f64, held_out: f64, seed: u64) -> Sbm {
        let mut rng = rng_for(&[seed, 0x53424d]);
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for u in 0..users {
            for i in 0..items {
                let same = u % blocks == i % blocks;
                if !rng.gen_bool(if same { p_in } else { p_out }) {
                    continue;
                }
                if same && rng.gen_bool(held_out) {
                    if rng.gen_bool(0.5) {
                        val.push((u, i));
                    } else {
                        test.push((u, i));
                    }
                } else {
                    train.push((u, i));
                }
            }
        }
        Sbm { users, items, blocks, train, val, test }
    }

    pub fn block_of(&self, x: usize) -> usize {
        x % self.blocks
    }
}

pub fn schema() -> Vec<EdgeType> {
    vec![parse_edge_type("u2click2i").unwrap().with_symmetric(true)]
}

/// Users are `u<k>`, items `i<k>`; all nodes exist even without train edges.
pub fn sbm_graph(sbm: &Sbm) -> HetGraph {
    let edges: Vec<EdgeRecord> =
        sbm.train.iter().map(|(u, i)| EdgeRecord::new("u2click2i", &format!("u{u}"), &format!("i{i}"))).collect();
    build_graph(&schema(), &edges, &[]).unwrap()
}

pub struct Harness {
    pub graph: Arc<HetGraph>,
    pub walk: WalkConfig,
    pub pipeline: PipelineConfig,
}

impl Harness {
    pub fn new(sbm: &Sbm, walk_len: usize, seed: u64) -> Harness {
        let graph = Arc::new(sbm_graph(sbm));
        let mp = parse_metapath("u2click2i - i2click2u", &schema()).unwrap();
        let walk = WalkConfig { metapaths: vec![mp], walk_len, walks_per_node: 1, seed };
        Harness { graph, walk, pipeline: PipelineConfig { win_size: 2, fanouts: vec![10, 10], ..Default::default() } }
    }

    pub fn trainer(&self, model: ModelConfig, train: TrainConfig, store: Arc<dyn ParamStore>) -> Trainer {
        Trainer::new(self.graph.clone(), &self.walk, self.pipeline.clone(), model, train, store).unwrap()
    }

    fn node(&self, t: &str, k: usize) -> NodeRef {
        self.graph.lookup(t, &format!("{t}{k}")).unwrap()
    }

    /// Embeddings keyed by the SBM's own user / item numbers.
    pub fn eval_data(&self, trainer: &Trainer, sbm: &Sbm) -> EvalData {
        let users: Vec<NodeRef> = (0..sbm.users).map(|k| self.node("u", k)).collect();
        let items: Vec<NodeRef> = (0..sbm.items).map(|k| self.node("i", k)).collect();
        let d = trainer.model().dim;
        let ue = trainer.embed(&users).unwrap();
        let ie = trainer.embed(&items).unwrap();
        EvalData::new(
            EmbeddingMatrix::from_rows(d, ue.into_iter().enumerate().map(|(k, v)| (k as u64, v))),
            EmbeddingMatrix::from_rows(d, ie.into_iter().enumerate().map(|(k, v)| (k as u64, v))),
            sbm.train.iter().map(|&(u, i)| (u as u64, i as u64)),
        )
    }
}

pub fn truth(pairs: &[(usize, usize)]) -> GroundTruth {
    ground_truth(pairs.iter().map(|&(u, i)| (u as u64, i as u64)))
}

pub fn u2i_recall(data: &EvalData, truth: &GroundTruth, k: usize) -> f64 {
    evaluate(data, truth, &EvalConfig { n: 20, k, strategy: Strategy::U2i, exclude_train: true }).recall
}

/// Mean user-item score within blocks minus across blocks.
pub fn block_margin(data: &EvalData, sbm: &Sbm) -> f64 {
    let (mut win, mut nin, mut wout, mut nout) = (0.0, 0usize, 0.0, 0usize);
    for u in 0..sbm.users {
        let hu = data.users.get(u as u64).unwrap();
        for i in 0..sbm.items {
            let hi = data.items.get(i as u64).unwrap();
            let s: f64 = hu.iter().zip(hi).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
            if sbm.block_of(u) == sbm.block_of(i) {
                win += s;
                nin += 1;
            } else {
                wout += s;
                nout += 1;
            }
        }
    }
    win / nin as f64 - wout / nout as f64
}

pub fn distinct<T: std::hash::Hash + Eq + Clone>(xs: &[T]) -> usize {
    xs.iter().cloned().collect::<HashSet<_>>().len()
}

pub fn report(stats: &TrainStats) -> String {
    format!("{} pairs, {} steps, loss {:.4}, {:.0} pairs/s", stats.pairs, stats.steps, stats.last_loss, stats.pairs_per_sec())
}

pub const RANDOM_SCHEMA: [&str; 3] = ["u2click2i", "u2follow2u", "i2tag2t"];

/// Small heterogeneous graph: users, items, tags; click and follow are
/// symmetric, tag is one-directional. Returns the graph and its raw edges.
pub fn random_graph(rng: &mut impl Rng, max_per_type: usize, side_info: bool) -> (HetGraph, Vec<EdgeRecord>) {
    let schema = vec![
        parse_edge_type("u2click2i").unwrap().with_symmetric(true),
        parse_edge_type("u2follow2u").unwrap().with_symmetric(true),
        parse_edge_type("i2tag2t").unwrap(),
    ];
    let nu = rng.gen_range(2..=max_per_type);
    let ni = rng.gen_range(2..=max_per_type);
    let nt = rng.gen_range(1..=max_per_type.min(4));
    let mut edges = Vec::new();
    for u in 0..nu {
        for _ in 0..rng.gen_range(1..=3) {
            edges.push(EdgeRecord::new("u2click2i", &format!("u{u}"), &format!("i{}", rng.gen_range(0..ni))));
        }
        if rng.gen_bool(0.6) {
            edges.push(EdgeRecord::new("u2follow2u", &format!("u{u}"), &format!("u{}", rng.gen_range(0..nu))));
        }
    }
    for i in 0..ni {
        if rng.gen_bool(0.5) {
            edges.push(EdgeRecord::new("i2tag2t", &format!("i{i}"), &format!("t{}", rng.gen_range(0..nt))));
        }
    }
    let mut side = Vec::new();
    if side_info {
        for i in 0..ni {
            if rng.gen_bool(0.7) {
                let mut slots = vec![(0, (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..6)).collect())];
                if rng.gen_bool(0.5) {
                    slots.push((1, vec![rng.gen_range(0..4)]));
                }
                side.push(hetrec_core::SideInfoRecord { node_type: "i".into(), node_id: format!("i{i}"), slots });
            }
        }
    }
    (build_graph(&schema, &edges, &side).unwrap(), edges)
}

pub fn all_nodes(g: &HetGraph) -> Vec<NodeRef> {
    (0..g.node_types().len() as u16).flat_map(|t| g.nodes_of(t)).collect()
}

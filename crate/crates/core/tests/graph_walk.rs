mod common;

use std::collections::HashMap;
use std::sync::Arc;

use common::*;
use hetrec_core::graph::build_graph;
use hetrec_core::rng::rng_for;
use hetrec_core::walk::{generate_walks, parse_metapath, WalkConfig, WalkPlan};
use hetrec_core::{parse_edge_type, EdgeRecord, EdgeType, HetGraph};

type Adjacency = HashMap<(String, String), Vec<String>>;

/// Neighbor multisets keyed by (relation name, source id), straight from the
/// input edges plus the reverse of every symmetric one.
fn oracle_adjacency(schema: &[EdgeType], edges: &[EdgeRecord]) -> Adjacency {
    let mut adj: Adjacency = HashMap::new();
    for e in edges {
        let t = schema.iter().find(|t| t.name() == e.edge_type).unwrap();
        adj.entry((t.name(), e.src.clone())).or_default().push(e.dst.clone());
        if t.symmetric {
            adj.entry((t.reversed().name(), e.dst.clone())).or_default().push(e.src.clone());
        }
    }
    adj.values_mut().for_each(|v| v.sort());
    adj
}

fn graph_adjacency(g: &HetGraph) -> Adjacency {
    let mut adj: Adjacency = HashMap::new();
    for r in 0..g.relations().len() {
        let (st, dt) = (g.src_type_of(r), g.dst_type_of(r));
        for v in g.nodes_of(st) {
            let ns = g.neighbors_by_id(r, v.index());
            if ns.is_empty() {
                continue;
            }
            let mut ids: Vec<String> =
                ns.iter().map(|&i| g.external_id(hetrec_core::NodeRef::new(dt, i)).to_owned()).collect();
            ids.sort();
            adj.insert((g.relation(r).name(), g.external_id(v).to_owned()), ids);
        }
    }
    adj
}

fn random_schema() -> Vec<EdgeType> {
    RANDOM_SCHEMA
        .iter()
        .map(|s| {
            let t = parse_edge_type(s).unwrap();
            let sym = t.relation != "tag";
            t.with_symmetric(sym)
        })
        .collect()
}

#[test]
fn adjacency_round_trip_against_edge_list() {
    let schema = random_schema();
    for case in 0..1000u64 {
        let mut rng = rng_for(&[case, 0x6772]);
        let (g, edges) = random_graph(&mut rng, 12, false);
        assert_eq!(graph_adjacency(&g), oracle_adjacency(&schema, &edges), "case {case}");
    }
}

#[test]
fn neighbors_are_stable_under_concurrent_reads() {
    let mut rng = rng_for(&[3]);
    let (g, _) = random_graph(&mut rng, 40, false);
    let g = Arc::new(g);
    let expect = graph_adjacency(&g);
    std::thread::scope(|s| {
        for _ in 0..4 {
            let g = g.clone();
            let expect = &expect;
            s.spawn(move || {
                for _ in 0..50 {
                    assert_eq!(&graph_adjacency(&g), expect);
                }
            });
        }
    });
}

#[test]
fn adjacency_offsets_point_at_valid_nodes() {
    for case in 0..200u64 {
        let mut rng = rng_for(&[case, 0x6f66]);
        let (g, edges) = random_graph(&mut rng, 15, false);
        let mut total = 0;
        for r in 0..g.relations().len() {
            let dst_n = g.node_count(g.dst_type_of(r));
            for v in g.nodes_of(g.src_type_of(r)) {
                let ns = g.neighbors_by_id(r, v.index());
                assert!(ns.iter().all(|&i| i < dst_n));
                total += ns.len();
            }
            assert_eq!(g.edge_count(r), (0..g.node_count(g.src_type_of(r))).map(|v| g.degree(r, v)).sum::<usize>());
        }
        let sym = edges.iter().filter(|e| e.edge_type != "i2tag2t").count();
        assert_eq!(total, edges.len() + sym);
    }
}

fn walk_config(g: &HetGraph, specs: &[&str], walk_len: usize, per_node: usize, seed: u64) -> WalkConfig {
    let metapaths = specs.iter().map(|s| parse_metapath(s, g.relations()).unwrap()).collect();
    WalkConfig { metapaths, walk_len, walks_per_node: per_node, seed }
}

#[test]
fn walks_follow_metapath_edges_and_types() {
    let schema = random_schema();
    let specs = ["u2click2i - i2click2u", "u2follow2u", "i2click2u - u2follow2u - u2click2i"];
    let mut steps_checked = 0;
    for case in 0..60u64 {
        let mut rng = rng_for(&[case, 0x77616c6b]);
        let (g, edges) = random_graph(&mut rng, 20, false);
        let oracle = oracle_adjacency(&schema, &edges);
        let walk_len = 2 + case as usize % 9;
        let cfg = walk_config(&g, &specs, walk_len, 2, case);
        for p in generate_walks(&g, &cfg).unwrap() {
            let steps = &cfg.metapaths[p.metapath].steps;
            assert!((1..=walk_len).contains(&p.nodes.len()));
            assert_eq!(g.type_name(p.nodes[0].type_ord()), steps[0].src_type);
            for (t, w) in p.nodes.windows(2).enumerate() {
                let step = &steps[t % steps.len()];
                assert_eq!(g.type_name(w[0].type_ord()), step.src_type);
                assert_eq!(g.type_name(w[1].type_ord()), step.dst_type);
                let key = (step.name(), g.external_id(w[0]).to_owned());
                let ns = oracle.get(&key).expect("walk left a node with no neighbors");
                assert!(ns.binary_search(&g.external_id(w[1]).to_owned()).is_ok());
                steps_checked += 1;
            }
            // A short path means the last node had nowhere to go.
            if p.nodes.len() < walk_len {
                let step = &steps[(p.nodes.len() - 1) % steps.len()];
                let last = g.external_id(*p.nodes.last().unwrap()).to_owned();
                assert!(!oracle.contains_key(&(step.name(), last)));
            }
        }
    }
    assert!(steps_checked >= 10_000, "only {steps_checked} steps");
}

#[test]
fn first_step_on_a_star_is_uniform() {
    let n = 12;
    let schema = vec![parse_edge_type("c2link2l").unwrap().with_symmetric(true)];
    let edges: Vec<EdgeRecord> = (0..n).map(|i| EdgeRecord::new("c2link2l", "hub", &format!("leaf{i}"))).collect();
    let g = build_graph(&schema, &edges, &[]).unwrap();
    let walks = 100 * n;
    let cfg = walk_config(&g, &["c2link2l - l2link2c"], 2, walks, 11);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in generate_walks(&g, &cfg).unwrap() {
        *counts.entry(g.external_id(p.nodes[1]).to_owned()).or_default() += 1;
    }
    assert_eq!(counts.len(), n);
    let p = 1.0 / n as f64;
    let mean = walks as f64 * p;
    let sigma = (walks as f64 * p * (1.0 - p)).sqrt();
    for (leaf, c) in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{leaf}: {c} vs {mean} ± {sigma}");
    }
}

#[test]
fn epochs_differ_but_replay_identically() {
    let mut rng = rng_for(&[9]);
    let (g, _) = random_graph(&mut rng, 25, false);
    let cfg = walk_config(&g, &["u2click2i - i2click2u"], 8, 1, 4);
    let plan = Arc::new(WalkPlan::new(&g, &cfg).unwrap());
    let e0: Vec<_> = plan.epoch(&g, 0).collect();
    let e1: Vec<_> = plan.epoch(&g, 1).collect();
    assert_eq!(e0, plan.epoch(&g, 0).collect::<Vec<_>>());
    assert_ne!(e0.iter().map(|p| &p.nodes).collect::<Vec<_>>(), e1.iter().map(|p| &p.nodes).collect::<Vec<_>>());
    let g = Arc::new(g);
    let mut threaded: Vec<_> = plan.spawn_epoch(g.clone(), 1, 3, 16).iter().collect();
    threaded.sort();
    let mut serial = e1;
    serial.sort();
    assert_eq!(threaded, serial);
}

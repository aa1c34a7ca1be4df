mod common;

use std::collections::HashMap;

use common::*;
use hetrec_core::rng::rng_for;
use hetrec_core::sample::{
    stream_training_batches, EgoGraph, PairOrder, PipelineConfig, PipelineOrder, TrainPair,
};
use hetrec_core::walk::{generate_walks, parse_metapath, Path, WalkConfig};
use hetrec_core::{HetGraph, NodeRef};
use proptest::prelude::*;

fn walks(g: &HetGraph, seed: u64, walk_len: usize) -> Vec<Path> {
    let metapaths = ["u2click2i - i2click2u", "u2follow2u"]
        .iter()
        .map(|s| parse_metapath(s, g.relations()).unwrap())
        .collect();
    generate_walks(g, &WalkConfig { metapaths, walk_len, walks_per_node: 2, seed }).unwrap()
}

/// Positions in the same path at distance 1..=w, enumerated directly.
fn oracle_pairs(paths: &[Path], w: usize) -> Vec<(u64, u32, u32)> {
    let mut out = Vec::new();
    for p in paths {
        let n = p.nodes.len();
        for i in 0..n {
            for j in 0..n {
                if i != j && i.abs_diff(j) <= w {
                    out.push((p.id, i as u32, j as u32));
                }
            }
        }
    }
    out.sort();
    out
}

fn check_ego(g: &HetGraph, ego: &EgoGraph, center: NodeRef, fanouts: &[usize]) {
    assert_eq!(ego.center, center);
    assert_eq!(ego.per_relation.len(), g.channels().len());
    for rel in &ego.per_relation {
        assert_eq!(rel.layer(0), &[center]);
        assert_eq!(rel.depth(), fanouts.len());
        let mut children: HashMap<u32, Vec<NodeRef>> = HashMap::new();
        for &(p, c) in &rel.edges {
            assert_eq!(rel.layer_of(c as usize), rel.layer_of(p as usize) + 1);
            children.entry(p).or_default().push(rel.nodes[c as usize]);
        }
        assert_eq!(rel.edges.len(), rel.nodes.len() - 1);
        for k in 0..fanouts.len() {
            for (off, &parent) in rel.layer(k).iter().enumerate() {
                let pos = (rel.layer_offsets[k] + off) as u32;
                let kids = children.remove(&pos).unwrap_or_default();
                let Some(dir) = g.channel_direction(rel.channel, parent.type_ord()) else {
                    assert!(kids.is_empty());
                    continue;
                };
                let neigh = g.neighbors_by_id(dir, parent.index());
                assert_eq!(kids.len(), fanouts[k].min(neigh.len()));
                for kid in kids {
                    assert_eq!(kid.type_ord(), g.dst_type_of(dir));
                    assert!(neigh.contains(&kid.index()));
                }
            }
        }
    }
}

fn all_channels(g: &HetGraph) -> Vec<usize> {
    (0..g.channels().len()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batches_cover_every_window_pair_once(
        seed in any::<u64>(),
        win in 1usize..4,
        batch in 1usize..40,
        walk_len in 1usize..9,
    ) {
        let mut rng = rng_for(&[seed]);
        let (g, _) = random_graph(&mut rng, 10, false);
        let paths = walks(&g, seed, walk_len);
        let cfg = PipelineConfig { win_size: win, batch_size: batch, ..Default::default() };
        let order = PipelineOrder::new(PairOrder::EgoFirst);
        let batches: Vec<Vec<TrainPair>> =
            stream_training_batches(&g, paths.iter().cloned(), &cfg, &order, None, seed).collect();
        if let Some((last, full)) = batches.split_last() {
            prop_assert!(full.iter().all(|b| b.len() == batch));
            prop_assert!(!last.is_empty() && last.len() <= batch);
        }
        let by_id: HashMap<u64, &Path> = paths.iter().map(|p| (p.id, p)).collect();
        let mut got = Vec::new();
        let mut directed = HashMap::<(NodeRef, NodeRef), i64>::new();
        for p in batches.iter().flatten() {
            let path = by_id[&p.path_id];
            prop_assert_eq!(p.center, path.nodes[p.positions.0 as usize]);
            prop_assert_eq!(p.context, path.nodes[p.positions.1 as usize]);
            prop_assert!(p.center_ego.is_none() && p.context_ego.is_none());
            *directed.entry((p.center, p.context)).or_default() += 1;
            *directed.entry((p.context, p.center)).or_default() -= 1;
            got.push((p.path_id, p.positions.0, p.positions.1));
        }
        prop_assert!(directed.values().all(|&c| c == 0));
        got.sort();
        prop_assert_eq!(got, oracle_pairs(&paths, win));
    }

    #[test]
    fn ego_graphs_respect_fanouts(
        seed in any::<u64>(),
        fanouts in prop::collection::vec(1usize..4, 1..3),
        pair_first in any::<bool>(),
    ) {
        let mut rng = rng_for(&[seed, 1]);
        let (g, _) = random_graph(&mut rng, 10, false);
        let paths = walks(&g, seed, 5);
        let mode = if pair_first { PairOrder::PairFirst } else { PairOrder::EgoFirst };
        let cfg = PipelineConfig { win_size: 2, batch_size: 16, fanouts: fanouts.clone(), order: mode };
        let order = PipelineOrder::new(mode);
        let mut pairs = 0u64;
        let mut nodes = 0u64;
        for p in &paths {
            let n = p.nodes.len() as u64;
            nodes += if n > 1 { n } else { 0 };
        }
        for batch in stream_training_batches(&g, paths.iter().cloned(), &cfg, &order, Some(all_channels(&g)), seed) {
            for p in batch {
                check_ego(&g, p.center_ego.as_ref().unwrap(), p.center, &fanouts);
                check_ego(&g, p.context_ego.as_ref().unwrap(), p.context, &fanouts);
                pairs += 1;
            }
        }
        let expect = if pair_first { 2 * pairs } else { nodes };
        prop_assert_eq!(order.ego_samples(), expect);
    }
}

#[test]
fn ego_first_shares_one_sample_per_position() {
    let mut rng = rng_for(&[21]);
    let (g, _) = random_graph(&mut rng, 12, false);
    let paths = walks(&g, 21, 6);
    let cfg = PipelineConfig { win_size: 2, batch_size: 7, fanouts: vec![3, 2], order: PairOrder::EgoFirst };
    let order = PipelineOrder::new(PairOrder::EgoFirst);
    let mut seen: HashMap<(u64, u32), *const EgoGraph> = HashMap::new();
    for p in stream_training_batches(&g, paths.into_iter(), &cfg, &order, Some(all_channels(&g)), 3).flatten() {
        for (pos, ego) in [(p.positions.0, &p.center_ego), (p.positions.1, &p.context_ego)] {
            let ptr = std::sync::Arc::as_ptr(ego.as_ref().unwrap());
            assert_eq!(*seen.entry((p.path_id, pos)).or_insert(ptr), ptr);
        }
    }
    assert!(!seen.is_empty());
}

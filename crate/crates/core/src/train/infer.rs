use rayon::prelude::*;

use hetrec_ps::{ParamStore, PsError};

use crate::graph::HetGraph;
use crate::keyspace::NodeRef;
use crate::model::{base_embedding, DenseParams, EgoForward, ModelConfig, NodeFeatureSpec, SparseValues, Tree};
use crate::rng::rng_for;
use crate::sample::sample_ego;

pub const INFER_TAG: u64 = 0x494e_4652;

const CHUNK: usize = 4096;

/// Final representations of `nodes`. GNN models encode a freshly sampled ego
/// per node, seeded by `(seed, node)` so results do not depend on batching.
#[allow(clippy::too_many_arguments)]
pub fn node_embeddings(
    g: &HetGraph,
    model: &ModelConfig,
    channels: &[usize],
    fanouts: &[usize],
    dense: &DenseParams<f32>,
    store: &dyn ParamStore,
    nodes: &[NodeRef],
    seed: u64,
) -> Result<Vec<Vec<f32>>, PsError> {
    let mut out = Vec::with_capacity(nodes.len());
    for chunk in nodes.chunks(CHUNK) {
        let units: Vec<(Option<Tree>, Vec<NodeFeatureSpec>)> = chunk
            .par_iter()
            .map(|&v| {
                if model.kind.is_gnn() {
                    let mut rng = rng_for(&[seed, v.key(), INFER_TAG]);
                    let tree = Tree::from_ego(&sample_ego(g, v, channels, &fanouts[..model.layers], &mut rng));
                    let specs = tree.nodes.iter().map(|&n| NodeFeatureSpec::of(g, n, model.use_side_info)).collect();
                    (Some(tree), specs)
                } else {
                    (None, vec![NodeFeatureSpec::of(g, v, model.use_side_info)])
                }
            })
            .collect();
        let mut keys: Vec<u64> = units.iter().flat_map(|u| u.1.iter().flat_map(|s| s.keys())).collect();
        keys.sort_unstable();
        keys.dedup();
        let pulled = store.pull(&keys)?;
        let vals: SparseValues<f32> = SparseValues::from_flat(store.dim(), &keys, &pulled);
        let embs: Vec<Vec<f32>> = units
            .into_par_iter()
            .map(|(tree, specs)| {
                let h0: Vec<Vec<f32>> = specs.iter().map(|s| base_embedding(s, &vals)).collect();
                match tree {
                    Some(t) => EgoForward::run(t, h0, model, dense).output().to_vec(),
                    None => h0.into_iter().next().unwrap(),
                }
            })
            .collect();
        out.extend(embs);
    }
    Ok(out)
}

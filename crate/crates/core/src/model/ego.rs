use super::layers::{relation_combine, relation_combine_backward, relation_layer, relation_layer_backward};
use super::linalg::add_into;
use super::{CombineCache, DenseParams, LayerCache, ModelConfig, Real};
use crate::keyspace::NodeRef;
use crate::sample::EgoGraph;

/// An ego graph unrolled into a tree. Node 0 is the center and has one child
/// list per channel; every other node has a single list for the channel it
/// was sampled under.
#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<NodeRef>,
    pub depth: Vec<usize>,
    /// `(channel position, child indices)` per node.
    pub children: Vec<Vec<(usize, Vec<usize>)>>,
}

impl Tree {
    pub fn from_ego(ego: &EgoGraph) -> Tree {
        let n = ego.node_count();
        let mut nodes = Vec::with_capacity(n);
        let mut depth = Vec::with_capacity(n);
        let mut children = Vec::with_capacity(n);
        nodes.push(ego.center);
        depth.push(0);
        children.push((0..ego.per_relation.len()).map(|c| (c, Vec::new())).collect::<Vec<_>>());
        for (c, rel) in ego.per_relation.iter().enumerate() {
            let mut map = vec![0usize; rel.nodes.len()];
            for (pos, &node) in rel.nodes.iter().enumerate().skip(1) {
                map[pos] = nodes.len();
                nodes.push(node);
                depth.push(rel.layer_of(pos));
                children.push(vec![(c, Vec::new())]);
            }
            for &(p, ch) in &rel.edges {
                let (p, ch) = (map[p as usize], map[ch as usize]);
                let list = if p == 0 { &mut children[0][c].1 } else { &mut children[p][0].1 };
                list.push(ch);
            }
        }
        Tree { nodes, depth, children }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Step<T> {
    layers: Vec<LayerCache<T>>,
    rel_out: Vec<Vec<T>>,
    combine: CombineCache<T>,
}

/// Forward pass over one ego tree with every intermediate kept for backward.
#[derive(Debug, Clone)]
pub struct EgoForward<T> {
    pub tree: Tree,
    /// `h[k][x]` for nodes with `depth[x] <= K - k`.
    h: Vec<Vec<Option<Vec<T>>>>,
    steps: Vec<Vec<Option<Step<T>>>>,
}

impl<T: Real> EgoForward<T> {
    /// `h0[x]` is the base embedding of tree node `x`.
    pub fn run(tree: Tree, h0: Vec<Vec<T>>, cfg: &ModelConfig, params: &DenseParams<T>) -> Self {
        assert!(cfg.kind.is_gnn(), "ego forward needs a GNN model");
        assert_eq!(h0.len(), tree.len());
        let k_max = cfg.layers;
        let alpha = T::of(cfg.alpha);
        let mut h: Vec<Vec<Option<Vec<T>>>> = vec![h0.into_iter().map(Some).collect()];
        let mut steps = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let prev = &h[k - 1];
            let mut cur = vec![None; tree.len()];
            let mut st = vec![None; tree.len()];
            for x in 0..tree.len() {
                if tree.depth[x] + k > k_max {
                    continue;
                }
                let own = prev[x].as_ref().expect("lower layer computed");
                let mut layers = Vec::with_capacity(tree.children[x].len());
                let mut rel_out = Vec::with_capacity(tree.children[x].len());
                for (c, kids) in &tree.children[x] {
                    let neigh: Vec<&[T]> = kids.iter().map(|&y| prev[y].as_deref().expect("child computed")).collect();
                    let (o, lc) = relation_layer(cfg.kind, own, &neigh, params.sage(k - 1, *c));
                    layers.push(lc);
                    rel_out.push(o);
                }
                let refs: Vec<&[T]> = rel_out.iter().map(Vec::as_slice).collect();
                let h0x = h[0][x].as_deref().unwrap();
                let (out, combine) = relation_combine(h0x, &refs, alpha, cfg.phi, params.attention(k - 1));
                cur[x] = Some(out);
                st[x] = Some(Step { layers, rel_out, combine });
            }
            h.push(cur);
            steps.push(st);
        }
        EgoForward { tree, h, steps }
    }

    /// Smallest |pre-activation| over all Sage layers, if any.
    pub fn min_abs_preactivation(&self) -> Option<T> {
        self.steps
            .iter()
            .flatten()
            .flatten()
            .flat_map(|s| s.layers.iter().flat_map(|l| l.pre.iter()))
            .map(|z| z.abs())
            .reduce(T::min)
    }

    pub fn output(&self) -> &[T] {
        self.h.last().unwrap()[0].as_deref().unwrap()
    }

    /// Gradient with respect to each tree node's base embedding; dense
    /// gradients accumulate into `grads`.
    pub fn backward(&self, g_out: &[T], cfg: &ModelConfig, params: &DenseParams<T>, grads: &mut DenseParams<T>) -> Vec<Vec<T>> {
        let d = g_out.len();
        let n = self.tree.len();
        let k_max = self.steps.len();
        let alpha = T::of(cfg.alpha);
        let mut g: Vec<Option<Vec<T>>> = vec![None; n];
        g[0] = Some(g_out.to_vec());
        let mut g_h0: Vec<Vec<T>> = vec![vec![T::zero(); d]; n];
        for k in (1..=k_max).rev() {
            let mut g_prev: Vec<Option<Vec<T>>> = vec![None; n];
            for x in 0..n {
                let Some(gx) = g[x].take() else { continue };
                let step = self.steps[k - 1][x].as_ref().unwrap();
                let refs: Vec<&[T]> = step.rel_out.iter().map(Vec::as_slice).collect();
                let (gh0, g_rel) = relation_combine_backward(
                    &gx,
                    &refs,
                    alpha,
                    cfg.phi,
                    params.attention(k - 1),
                    grads.attention_mut(k - 1),
                    &step.combine,
                );
                add_into(&gh0, &mut g_h0[x]);
                let own = self.h[k - 1][x].as_deref().unwrap();
                for (((c, kids), lc), gr) in self.tree.children[x].iter().zip(&step.layers).zip(&g_rel) {
                    let (g_center, g_each) =
                        relation_layer_backward(cfg.kind, gr, own, lc, params.sage(k - 1, *c), grads.sage_mut(k - 1, *c));
                    if let Some(gc) = g_center {
                        add_to(&mut g_prev[x], &gc);
                    }
                    for &y in kids {
                        add_to(&mut g_prev[y], &g_each);
                    }
                }
            }
            g = g_prev;
        }
        for (x, gx) in g.into_iter().enumerate() {
            if let Some(gx) = gx {
                add_into(&gx, &mut g_h0[x]);
            }
        }
        g_h0
    }
}

fn add_to<T: Real>(slot: &mut Option<Vec<T>>, v: &[T]) {
    match slot {
        Some(s) => add_into(v, s),
        None => *slot = Some(v.to_vec()),
    }
}

use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::graph::HetGraph;
use crate::keyspace::NodeRef;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegMode {
    Random,
    InBatch,
}

impl FromStr for NegMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(NegMode::Random),
            "inbatch" | "in_batch" => Ok(NegMode::InBatch),
            _ => Err(format!("unknown negative mode {s:?}; expected random or in_batch")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegDist {
    Uniform,
    Degree075,
}

impl FromStr for NegDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(NegDist::Uniform),
            "degree075" | "degree_075" | "degree^0.75" => Ok(NegDist::Degree075),
            _ => Err(format!("unknown negative distribution {s:?}; expected uniform or degree075")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSampler {
    pub mode: NegMode,
    pub num_negatives: usize,
    pub distribution: NegDist,
}

impl Default for NegativeSampler {
    fn default() -> Self {
        NegativeSampler { mode: NegMode::InBatch, num_negatives: 5, distribution: NegDist::Uniform }
    }
}

const MAX_REJECTIONS: usize = 64;

/// Per-type draw tables for random negatives.
#[derive(Debug, Clone)]
pub struct NegativeTable {
    per_type: Vec<TypeTable>,
}

#[derive(Debug, Clone)]
enum TypeTable {
    Uniform(u64),
    Weighted(WeightedIndex<f64>),
    Empty,
}

impl NegativeTable {
    pub fn new(g: &HetGraph, dist: NegDist) -> Self {
        let per_type = (0..g.node_types().len() as u16)
            .map(|t| {
                let n = g.node_count(t);
                if n < 2 {
                    return TypeTable::Empty;
                }
                match dist {
                    NegDist::Uniform => TypeTable::Uniform(n),
                    NegDist::Degree075 => {
                        let w: Vec<f64> = g.nodes_of(t).map(|v| (g.total_degree(v) as f64).powf(0.75)).collect();
                        match WeightedIndex::new(&w) {
                            Ok(wi) if w.iter().filter(|&&x| x > 0.0).count() >= 2 => TypeTable::Weighted(wi),
                            _ => TypeTable::Uniform(n),
                        }
                    }
                }
            })
            .collect();
        NegativeTable { per_type }
    }

    /// `m` nodes of `context`'s type, never `context` itself. Returns fewer
    /// when the type has no other node.
    pub fn draw(&self, context: NodeRef, m: usize, rng: &mut Rng) -> Vec<NodeRef> {
        let t = context.type_ord();
        let table = &self.per_type[t as usize];
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            for _ in 0..MAX_REJECTIONS {
                let i = match table {
                    TypeTable::Uniform(n) => rng.gen_range(0..*n),
                    TypeTable::Weighted(w) => w.sample(rng) as u64,
                    TypeTable::Empty => return out,
                };
                if i != context.index() {
                    out.push(NodeRef::new(t, i));
                    break;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, parse_edge_type, EdgeRecord};
    use rand::SeedableRng;

    #[test]
    fn never_returns_positive_and_keeps_type() {
        let schema = vec![parse_edge_type("u2click2i").unwrap()];
        let edges: Vec<_> = (0..5).map(|i| EdgeRecord::new("u2click2i", &format!("u{i}"), &format!("i{}", i % 3))).collect();
        let g = build_graph(&schema, &edges, &[]).unwrap();
        let mut rng = Rng::seed_from_u64(0);
        for dist in [NegDist::Uniform, NegDist::Degree075] {
            let table = NegativeTable::new(&g, dist);
            for ctx in g.nodes_of(1) {
                let negs = table.draw(ctx, 50, &mut rng);
                assert_eq!(negs.len(), 50);
                assert!(negs.iter().all(|&w| w != ctx && w.type_ord() == 1));
            }
        }
    }

    #[test]
    fn singleton_type_has_no_negatives() {
        let schema = vec![parse_edge_type("u2click2i").unwrap()];
        let g = build_graph(&schema, &[EdgeRecord::new("u2click2i", "a", "x")], &[]).unwrap();
        let table = NegativeTable::new(&g, NegDist::Uniform);
        let mut rng = Rng::seed_from_u64(0);
        assert!(table.draw(g.lookup("i", "x").unwrap(), 5, &mut rng).is_empty());
    }
}

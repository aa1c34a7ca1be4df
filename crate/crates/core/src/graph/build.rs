use std::collections::HashMap;

use super::{parse_edge_type, EdgeType, GraphError};
use crate::keyspace::{NodeRef, INDEX_MASK, MAX_NODE_TYPES, MAX_SLOTS};

/// One input edge: `(edge type spec, src external id, dst external id)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRecord {
    pub edge_type: String,
    pub src: String,
    pub dst: String,
}

impl EdgeRecord {
    pub fn new(edge_type: &str, src: &str, dst: &str) -> Self {
        EdgeRecord { edge_type: edge_type.into(), src: src.into(), dst: dst.into() }
    }
}

/// `(slot id, value ids)`; a slot may hold several values.
pub type SlotValues = (u32, Vec<u64>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfoRecord {
    pub node_type: String,
    pub node_id: String,
    pub slots: Vec<SlotValues>,
}

#[derive(Debug, Default, Clone)]
struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, u64>,
}

impl Vocab {
    fn intern(&mut self, id: &str) -> u64 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len() as u64;
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }
}

#[derive(Debug, Clone, Default)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u64>,
}

impl Csr {
    /// Stable bucket sort by source: neighbors keep input order.
    fn from_edges(num_src: usize, edges: &[(u64, u64)]) -> Self {
        let mut offsets = vec![0usize; num_src + 1];
        for &(s, _) in edges {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..num_src {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u64; edges.len()];
        for &(s, d) in edges {
            targets[cursor[s as usize]] = d;
            cursor[s as usize] += 1;
        }
        Csr { offsets, targets }
    }

    fn run(&self, v: u64) -> &[u64] {
        let v = v as usize;
        if v + 1 >= self.offsets.len() {
            return &[];
        }
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// A relation together with its reverse direction. Ego sampling and the
/// per-relation model weights work per channel, so `u2click2i` and
/// `i2click2u` share one neighborhood and one set of weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub name: String,
    /// Relation indices; one per distinct source type.
    pub directions: Vec<usize>,
}

/// Immutable heterogeneous graph. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct HetGraph {
    node_types: Vec<String>,
    type_index: HashMap<String, u16>,
    vocab: Vec<Vocab>,
    relations: Vec<EdgeType>,
    relation_index: HashMap<String, usize>,
    reverse_of: Vec<Option<usize>>,
    adjacency: Vec<Csr>,
    channels: Vec<Channel>,
    side_info: HashMap<NodeRef, Vec<SlotValues>>,
}

struct Builder {
    node_types: Vec<String>,
    type_index: HashMap<String, u16>,
    relations: Vec<EdgeType>,
    relation_index: HashMap<String, usize>,
}

impl Builder {
    fn type_ord(&mut self, name: &str) -> Result<u16, GraphError> {
        if let Some(&t) = self.type_index.get(name) {
            return Ok(t);
        }
        if self.node_types.len() >= MAX_NODE_TYPES {
            return Err(GraphError::Capacity { what: "node types", limit: MAX_NODE_TYPES as u64 });
        }
        let t = self.node_types.len() as u16;
        self.node_types.push(name.to_owned());
        self.type_index.insert(name.to_owned(), t);
        Ok(t)
    }

    fn register(&mut self, t: EdgeType) -> Result<usize, GraphError> {
        // Re-validate: the schema may have been built by hand.
        let t = EdgeType::new(&t.src_type, &t.relation, &t.dst_type, t.symmetric)?;
        self.type_ord(&t.src_type)?;
        self.type_ord(&t.dst_type)?;
        let name = t.name();
        if let Some(&i) = self.relation_index.get(&name) {
            self.relations[i].symmetric |= t.symmetric;
            return Ok(i);
        }
        let i = self.relations.len();
        self.relations.push(t);
        self.relation_index.insert(name, i);
        Ok(i)
    }
}

/// Builds the graph. Node indices are assigned per type in first-seen order
/// (edges first, then side-info records). For symmetric types the reverse
/// triple is registered and every input edge also lands, once, in its
/// adjacency. Duplicate edges are kept.
pub fn build_graph(
    schema: &[EdgeType],
    edges: &[EdgeRecord],
    side_info: &[SideInfoRecord],
) -> Result<HetGraph, GraphError> {
    let mut b = Builder {
        node_types: Vec::new(),
        type_index: HashMap::new(),
        relations: Vec::new(),
        relation_index: HashMap::new(),
    };
    for t in schema {
        b.register(t.clone())?;
        if t.symmetric {
            b.register(t.reversed())?;
        }
    }
    let mut reverse_of = vec![None; b.relations.len()];
    for (i, t) in b.relations.iter().enumerate() {
        reverse_of[i] = b.relation_index.get(&t.reversed().name()).copied();
    }

    let mut vocab = vec![Vocab::default(); b.node_types.len()];
    let mut lists: Vec<Vec<(u64, u64)>> = vec![Vec::new(); b.relations.len()];
    for e in edges {
        let r = match b.relation_index.get(&e.edge_type) {
            Some(&r) => r,
            None => {
                // Accept any spelling that parses to a registered triple.
                let canon = parse_edge_type(&e.edge_type).map_err(|_| GraphError::UnknownEdgeType(e.edge_type.clone()))?;
                *b.relation_index.get(&canon.name()).ok_or_else(|| GraphError::UnknownEdgeType(e.edge_type.clone()))?
            }
        };
        if e.src.is_empty() || e.dst.is_empty() {
            return Err(GraphError::EmptyNodeId(e.edge_type.clone()));
        }
        let t = &b.relations[r];
        let s = vocab[b.type_index[&t.src_type] as usize].intern(&e.src);
        let d = vocab[b.type_index[&t.dst_type] as usize].intern(&e.dst);
        lists[r].push((s, d));
        if t.symmetric {
            if let Some(rr) = reverse_of[r] {
                lists[rr].push((d, s));
            }
        }
    }

    let mut side = HashMap::new();
    for rec in side_info {
        let t = *b.type_index.get(&rec.node_type).ok_or_else(|| GraphError::UnknownNodeType(rec.node_type.clone()))?;
        if rec.node_id.is_empty() {
            return Err(GraphError::EmptyNodeId(rec.node_type.clone()));
        }
        for (slot, values) in &rec.slots {
            if *slot >= MAX_SLOTS {
                return Err(GraphError::Capacity { what: "slot id", limit: MAX_SLOTS as u64 });
            }
            if values.iter().any(|v| *v > INDEX_MASK) {
                return Err(GraphError::Capacity { what: "slot value id", limit: INDEX_MASK });
            }
        }
        let idx = vocab[t as usize].intern(&rec.node_id);
        let entry: &mut Vec<SlotValues> = side.entry(NodeRef::new(t, idx)).or_default();
        entry.extend(rec.slots.iter().cloned());
    }
    for v in &vocab {
        if v.ids.len() as u64 > INDEX_MASK {
            return Err(GraphError::Capacity { what: "nodes per type", limit: INDEX_MASK });
        }
    }

    let adjacency = b
        .relations
        .iter()
        .zip(&lists)
        .map(|(t, l)| Csr::from_edges(vocab[b.type_index[&t.src_type] as usize].ids.len(), l))
        .collect();

    let mut channels: Vec<Channel> = Vec::new();
    let mut assigned = vec![false; b.relations.len()];
    for r in 0..b.relations.len() {
        if assigned[r] {
            continue;
        }
        let mut directions = vec![r];
        assigned[r] = true;
        if let Some(rr) = reverse_of[r] {
            if !assigned[rr] {
                directions.push(rr);
                assigned[rr] = true;
            }
        }
        channels.push(Channel { name: b.relations[r].name(), directions });
    }

    Ok(HetGraph {
        node_types: b.node_types,
        type_index: b.type_index,
        vocab,
        relations: b.relations,
        relation_index: b.relation_index,
        reverse_of,
        adjacency,
        channels,
        side_info: side,
    })
}

impl HetGraph {
    pub fn node_types(&self) -> &[String] {
        &self.node_types
    }

    pub fn type_ord(&self, name: &str) -> Option<u16> {
        self.type_index.get(name).copied()
    }

    pub fn type_name(&self, t: u16) -> &str {
        &self.node_types[t as usize]
    }

    pub fn node_count(&self, t: u16) -> u64 {
        self.vocab[t as usize].ids.len() as u64
    }

    pub fn total_nodes(&self) -> u64 {
        self.vocab.iter().map(|v| v.ids.len() as u64).sum()
    }

    /// All nodes of one type, in index order.
    pub fn nodes_of(&self, t: u16) -> impl Iterator<Item = NodeRef> + '_ {
        (0..self.node_count(t)).map(move |i| NodeRef::new(t, i))
    }

    pub fn lookup(&self, node_type: &str, external_id: &str) -> Option<NodeRef> {
        let t = self.type_ord(node_type)?;
        self.vocab[t as usize].index.get(external_id).map(|&i| NodeRef::new(t, i))
    }

    pub fn external_id(&self, node: NodeRef) -> &str {
        &self.vocab[node.type_ord() as usize].ids[node.index() as usize]
    }

    /// Registered edge types, including materialized reverses.
    pub fn relations(&self) -> &[EdgeType] {
        &self.relations
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn relation(&self, r: usize) -> &EdgeType {
        &self.relations[r]
    }

    pub fn reverse_of(&self, r: usize) -> Option<usize> {
        self.reverse_of[r]
    }

    pub fn src_type_of(&self, r: usize) -> u16 {
        self.type_index[&self.relations[r].src_type]
    }

    pub fn dst_type_of(&self, r: usize) -> u16 {
        self.type_index[&self.relations[r].dst_type]
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Channel containing the relation called `name`.
    pub fn channel_of(&self, name: &str) -> Option<usize> {
        let r = self.relation_id(name)?;
        self.channels.iter().position(|c| c.directions.contains(&r))
    }

    /// The direction of `channel` that starts at node type `t`, if any.
    pub fn channel_direction(&self, channel: usize, t: u16) -> Option<usize> {
        self.channels[channel].directions.iter().copied().find(|&r| self.src_type_of(r) == t)
    }

    /// Neighbor indices (of the relation's destination type) of source
    /// index `v`. Out-of-range `v` yields an empty slice.
    #[inline]
    pub fn neighbors_by_id(&self, r: usize, v: u64) -> &[u64] {
        self.adjacency[r].run(v)
    }

    pub fn neighbors(&self, v: u64, relation: &str) -> Result<&[u64], GraphError> {
        let r = self.relation_id(relation).ok_or_else(|| GraphError::UnknownRelation(relation.into()))?;
        let t = self.src_type_of(r);
        if v >= self.node_count(t) {
            return Err(GraphError::NodeOutOfRange {
                node_type: self.node_types[t as usize].clone(),
                index: v,
                count: self.node_count(t),
            });
        }
        Ok(self.neighbors_by_id(r, v))
    }

    pub fn degree(&self, r: usize, v: u64) -> usize {
        self.neighbors_by_id(r, v).len()
    }

    /// Out-degree of `node` summed over every relation leaving its type.
    pub fn total_degree(&self, node: NodeRef) -> usize {
        (0..self.relations.len())
            .filter(|&r| self.src_type_of(r) == node.type_ord())
            .map(|r| self.degree(r, node.index()))
            .sum()
    }

    pub fn edge_count(&self, r: usize) -> usize {
        self.adjacency[r].targets.len()
    }

    pub fn side_info(&self, node: NodeRef) -> &[SlotValues] {
        self.side_info.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_side_info(&self) -> bool {
        !self.side_info.is_empty()
    }
}

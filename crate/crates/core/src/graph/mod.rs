//! Heterogeneous graph storage.
//!
//! Edge types are written `src2relation2dst` (`"u2click2i"`), or `src2dst`
//! for an unnamed relation (`"u2u"`), in which case the whole spec doubles as
//! the relation name. Every registered edge type owns a compressed adjacency
//! (offsets + neighbor indices) over the dense per-type node indices.

mod build;
mod edge_type;

pub use build::{build_graph, Channel, EdgeRecord, HetGraph, SideInfoRecord, SlotValues};
pub use edge_type::{parse_edge_type, EdgeType};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge type spec is empty")]
    EmptySpec,
    #[error("edge type {spec:?} splits into {parts} parts on '2'; expected 2 or 3")]
    Arity { spec: String, parts: usize },
    #[error("edge type {spec:?} has an empty part")]
    EmptyPart { spec: String },
    #[error("invalid name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("unknown edge type {0:?}")]
    UnknownEdgeType(String),
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("unknown node type {0:?}")]
    UnknownNodeType(String),
    #[error("empty node id in edge of type {0:?}")]
    EmptyNodeId(String),
    #[error("node index {index} out of range for type {node_type:?} ({count} nodes)")]
    NodeOutOfRange { node_type: String, index: u64, count: u64 },
    #[error("too many {what}: limit {limit}")]
    Capacity { what: &'static str, limit: u64 },
}

//! Training and evaluation of node embeddings on heterogeneous interaction
//! graphs.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`graph`]: typed nodes, relation-indexed adjacency, side-info slots.
//! 2. [`walk`]: metapath-constrained random walks.
//! 3. [`sample`]: relation-wise ego graphs and windowed (center, context) pairs.
//! 4. [`model`]: relation-wise message passing with a residual to the base
//!    embedding.
//! 5. [`train`]: skip-gram loss with explicit or in-batch negatives, driving
//!    pull/forward/backward/push against a [`hetrec_ps::ParamStore`].
//!
//! [`eval`] scores trained embeddings with ICF/UCF/U2I recall@K.

pub mod eval;
pub mod graph;
pub mod io;
pub mod keyspace;
pub mod model;
pub mod rng;
pub mod sample;
pub mod split;
pub mod train;
pub mod walk;

pub use graph::{parse_edge_type, EdgeRecord, EdgeType, GraphError, HetGraph, SideInfoRecord};
pub use keyspace::NodeRef;

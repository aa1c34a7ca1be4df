//! Sparse embedding parameter server.
//!
//! Keys are opaque `u64`s. Every key maps to a `dim`-wide `f32` vector that is
//! created on first touch by [`lazy_init`], a pure function of the table seed
//! and the key, so the value a fresh key receives never depends on arrival
//! order or on how many shards the table is split into.
//!
//! Two deployments share the [`ParamStore`] trait:
//!
//! * [`ShardedTable`]: in-process shards, routed by `key % num_shards`.
//! * [`RemoteTable`]: the same routing over TCP to processes running
//!   [`ShardServer`], speaking the framing in [`wire`].

mod checkpoint;
mod client;
mod error;
mod init;
mod optimizer;
mod server;
mod table;
pub mod wire;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use client::{RemoteTable, RetryPolicy};
pub use error::PsError;
pub use init::{init_bound, lazy_init, splitmix64};
pub use optimizer::SparseOptimizer;
pub use server::{ShardServer, ShutdownHandle};
pub use table::{Shard, ShardedTable};

use std::path::Path;

pub type Result<T, E = PsError> = std::result::Result<T, E>;

/// Default embedding width.
pub const DEFAULT_DIM: usize = 64;

/// Client-side view of a parameter table, local or remote.
pub trait ParamStore: Send + Sync {
    fn dim(&self) -> usize;

    /// Returns `keys.len() * dim` values, row `i` belonging to `keys[i]`.
    /// Unseen keys are lazily initialized and persisted.
    fn pull(&self, keys: &[u64]) -> Result<Vec<f32>>;

    /// Applies one optimizer step per `(key, grad row)`, in list order.
    /// `grads` holds `keys.len() * dim` values.
    fn push(&self, keys: &[u64], grads: &[f32], lr: f32) -> Result<()>;

    /// Writes every initialized entry. The table must be quiescent.
    fn save(&self, path: &Path) -> Result<()>;

    /// Replaces the table contents with the checkpoint. Returns the number of
    /// entries restored.
    fn load(&self, path: &Path) -> Result<u64>;

    /// Overwrites (or inserts) the checkpoint's entries, keeping everything
    /// else. Keys absent from the file still lazy-init on first pull.
    fn warm_start(&self, path: &Path) -> Result<u64>;
}

/// Routing rule shared by every deployment.
#[inline]
pub fn shard_of(key: u64, num_shards: usize) -> usize {
    (key % num_shards as u64) as usize
}

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsError {
    #[error("dimension mismatch: table has dim {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("push has {keys} keys but {values} gradient values (dim {dim})")]
    LengthMismatch { keys: usize, values: usize, dim: usize },

    #[error("bad checkpoint magic")]
    BadMagic,

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("checkpoint truncated: {0}")]
    Truncated(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("remote shard {shard} failed with status {status}: {message}")]
    Remote { shard: usize, status: u8, message: String },

    #[error("transport error talking to shard {shard}: {source}")]
    Transport {
        shard: usize,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PsError {
    /// Transport failures may succeed on retry; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, PsError::Transport { .. })
    }
}

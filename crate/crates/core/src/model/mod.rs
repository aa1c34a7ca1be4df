//! Node encoders: relation-wise message passing over ego graphs.
//!
//! Per layer `k` and relation channel `r`
//!
//! ```text
//! h_{v,r}^k = GNN_r(h_v^{k-1}, {h_u^{k-1} : u in N_r(v)})
//! h_v^k     = alpha * h_v^0 + (1 - alpha) * sum_r phi_r * h_{v,r}^k
//! ```
//!
//! Everything is generic over [`Real`] so the same code trains in `f32` and is
//! checked against finite differences in `f64`.

mod ego;
mod features;
pub mod linalg;
mod layers;
mod params;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

pub use ego::{EgoForward, Tree};
pub use features::{base_embedding, base_embedding_backward, NodeFeatureSpec, SparseGrads, SparseValues};
pub use layers::{
    relation_combine, relation_combine_backward, relation_layer, relation_layer_backward, CombineCache, LayerCache,
};
pub use params::{AttentionWeights, DenseParams, SageWeights};

use crate::graph::HetGraph;

pub trait Real:
    Float + FromPrimitive + Sum + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    WalkOnly,
    LightGcn,
    SageMean,
    SageSum,
}

impl ModelKind {
    pub fn is_gnn(self) -> bool {
        self != ModelKind::WalkOnly
    }

    pub fn is_sage(self) -> bool {
        matches!(self, ModelKind::SageMean | ModelKind::SageSum)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::WalkOnly => "walk_only",
            ModelKind::LightGcn => "lightgcn",
            ModelKind::SageMean => "sage_mean",
            ModelKind::SageSum => "sage_sum",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "walk_only" | "walkonly" => Ok(ModelKind::WalkOnly),
            "lightgcn" => Ok(ModelKind::LightGcn),
            "sage_mean" | "sagemean" => Ok(ModelKind::SageMean),
            "sage_sum" | "sagesum" => Ok(ModelKind::SageSum),
            _ => Err(format!("unknown model kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMode {
    Uniform,
    Attention,
}

impl PhiMode {
    pub fn name(self) -> &'static str {
        match self {
            PhiMode::Uniform => "uniform",
            PhiMode::Attention => "attention",
        }
    }
}

impl FromStr for PhiMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(PhiMode::Uniform),
            "attention" => Ok(PhiMode::Attention),
            _ => Err(format!("unknown phi mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of message-passing layers `K`; ignored for walk-only.
    pub layers: usize,
    pub dim: usize,
    pub alpha: f64,
    pub phi: PhiMode,
    /// Relation names whose channels feed the encoder; empty means all.
    pub relations: Vec<String>,
    pub use_side_info: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::LightGcn,
            layers: 2,
            dim: 64,
            alpha: 0.5,
            phi: PhiMode::Uniform,
            relations: Vec::new(),
            use_side_info: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 {
            return Err("model.dim must be positive".into());
        }
        if self.kind.is_gnn() && self.layers == 0 {
            return Err("model.layers must be >= 1 for GNN models".into());
        }
        if self.kind.is_gnn() && self.layers > u8::MAX as usize {
            return Err("model.layers too large".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("model.alpha must lie in [0, 1], got {}", self.alpha));
        }
        Ok(())
    }

    /// Graph channel ids used by the encoder, in configuration order.
    pub fn resolve_channels(&self, g: &HetGraph) -> Result<Vec<usize>, String> {
        if self.relations.is_empty() {
            return Ok((0..g.channels().len()).collect());
        }
        let mut out = Vec::new();
        for r in &self.relations {
            let c = g.channel_of(r).ok_or_else(|| format!("model relation {r:?} is not in the graph schema"))?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
        Ok(out)
    }
}

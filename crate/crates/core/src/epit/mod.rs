//! The interface-prediction network: equivariant message passing with a
//! graph transformer over intra-protein edges and dense invariant updates
//! between the two proteins.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, NamedArray, CHECKPOINT_MAGIC};
pub use forward::{
    attention_scale, compute_e, compute_f, edge_message, epit_forward, gtl_forward, initial_state, inter_update, painn_block, Dropout,
    NodeState, VECTOR_NORM_EPS,
};
pub use params::{Fc, LayerIndex, Lin, ModelParams, Network, ParamEntry};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protein_io::FeatureConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of the residue embedding and of the positional embedding.
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Number of 3x3 blocks summed into the rotation estimate.
    pub m: usize,
    pub k: usize,
    pub rbf_size: usize,
    pub rbf_max: f64,
    pub radial_cut: f64,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            hidden_dim: 128,
            layers: 2,
            heads: 16,
            m: 3,
            k: 10,
            rbf_size: 20,
            rbf_max: 20.0,
            radial_cut: 3.0,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            k: self.k,
            rbf_size: self.rbf_size,
            rbf_max: self.rbf_max,
            radial_cut: self.radial_cut,
            positional_dim: self.embed_dim,
        }
    }

    pub fn edge_dim(&self) -> usize {
        self.feature_config().edge_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("m", self.m),
            ("k", self.k),
            ("rbf_size", self.rbf_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.embed_dim % 2 != 0 {
            return Err(Error::Config("embed_dim must be even".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.radial_cut > 0.0) || !(self.rbf_max >= 0.0) {
            return Err(Error::Config("radial_cut must be positive and rbf_max non-negative".into()));
        }
        Ok(())
    }
}

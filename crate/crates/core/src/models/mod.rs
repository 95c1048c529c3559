//! The four lattice classifiers: GCN, deep-residual GCN, SAGNN, and masked
//! SAGNN, with a shared mean-pool + sigmoid readout.

mod config;
mod forward;
mod params;
mod verify;

pub use config::{param_count, ModelConfig, Variant};
pub use forward::{
    forward_pass, gc_aggregate_node, model_forward, readout_scalar, ForwardPass,
};
pub use params::{
    init_params, load_checkpoint, save_checkpoint, BatchNormBuffers, ModelParams,
    CHECKPOINT_FORMAT,
};
pub use verify::{pinned_lattice, verify_gradients};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("config/batch mismatch: {0}")]
    BatchMismatch(String),
    #[error("gradient verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

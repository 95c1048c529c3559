//! Dense-matrix kernels with reverse-mode differentiation.
//!
//! Everything runs in double precision on a single thread. The [`tape`]
//! submodule records forward ops and replays them in reverse for gradients;
//! [`gradcheck`] verifies those gradients against central differences.

pub mod gradcheck;
pub mod init;
pub mod kernels;
pub mod matrix;
pub mod param;
pub mod tape;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use init::init_glorot;
pub use kernels::{
    batch_norm, bce_loss, masked_mean_pool, masked_row_softmax, BatchNormState, BCE_EPSILON,
};
pub use matrix::DenseMatrix;
pub use param::{zero_grads, Parameter};
pub use tape::{BnBatchStats, Gradients, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("mask row {row} has no masked-in entries")]
    EmptyMaskRow { row: usize },
    #[error("no valid rows to pool")]
    NoValidRows,
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
}

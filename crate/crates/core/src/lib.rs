//! False-trigger mitigation on ASR word lattices with graph neural networks.
//!
//! A decoding lattice is converted to an arc-adjacency graph (arcs become
//! nodes, row-normalized adjacency over shared states) and classified as a
//! true or false voice-assistant trigger by one of four architectures: a
//! graph-convolution network, a deep-residual GCN, a multi-head
//! self-attention GNN, or the adjacency-masked variant of the latter.
//!
//! The crate is organized along the pipeline:
//!
//! - [`lattice`]: text format, parsing, the line-graph conversion, and the
//!   1-best path used by the ASR-output baseline;
//! - [`numerics`]: dense kernels with a reverse-mode differentiation tape and
//!   a finite-difference gradient checker;
//! - [`models`]: the four architectures, parameter accounting, checkpoints;
//! - [`training`]: zero-padded batching, Adam, the optimization loop;
//! - [`evaluation`]: ROC/AUC/FAR-at-TPR metrics and the ASR-output baseline;
//! - [`synthgen`]: synthetic labeled corpora for desk-scale experiments.

pub mod evaluation;
pub mod lattice;
pub mod models;
pub mod numerics;
pub mod synthgen;
pub mod training;

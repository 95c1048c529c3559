//! ASR word lattices: text format, validation, and the arc-adjacency graph
//! representation consumed by the models.

mod graph;
mod parse;
mod path;

pub use graph::{build_line_graph, GraphSample};
pub(crate) use parse::canon9;
pub use parse::{parse_corpus, parse_lattice, serialize_corpus, serialize_lattice};
pub use path::{best_path, contains_trigger};

use thiserror::Error;

/// Number of flattened feature values per arc.
pub const FEATURE_DIM: usize = 20;
/// Length of the phone-embedding prefix of the feature vector.
pub const PHONE_EMBEDDING_DIM: usize = 14;

/// Utterance-level label carried in the lattice header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    TrueTrigger,
    FalseTrigger,
    Unlabeled,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::TrueTrigger => "true",
            Label::FalseTrigger => "false",
            Label::Unlabeled => "unlabeled",
        }
    }
}

/// Per-arc feature vector. Flattens to exactly [`FEATURE_DIM`] values in
/// field order: 14 phone-embedding values, AM score, LM score, log-posterior,
/// frame count, and the two trigger-word flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcFeatures {
    pub phone_embedding: [f64; PHONE_EMBEDDING_DIM],
    pub am_score: f64,
    pub lm_score: f64,
    pub log_posterior: f64,
    pub num_frames: u32,
    pub trigger_flag_1: bool,
    pub trigger_flag_2: bool,
}

impl ArcFeatures {
    pub fn flatten(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..PHONE_EMBEDDING_DIM].copy_from_slice(&self.phone_embedding);
        out[14] = self.am_score;
        out[15] = self.lm_score;
        out[16] = self.log_posterior;
        out[17] = self.num_frames as f64;
        out[18] = if self.trigger_flag_1 { 1.0 } else { 0.0 };
        out[19] = if self.trigger_flag_2 { 1.0 } else { 0.0 };
        out
    }
}

/// One hypothesized word: a directed arc between two lattice states.
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub start_state: usize,
    pub end_state: usize,
    pub word: String,
    pub features: ArcFeatures,
}

/// A parsed word lattice. Arc order is significant: it defines the row order
/// of the adjacency and feature matrices built from this lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub utterance_id: String,
    pub label: Label,
    pub num_states: usize,
    pub arcs: Vec<Arc>,
}

impl Lattice {
    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }
}

/// Errors from parsing the lattice text format. Every variant names the
/// 1-based line where the problem was found.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: expected {expected} whitespace-separated fields, got {got}")]
    WrongArcFieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: state index {state} out of range (num_states = {num_states})")]
    StateIndexOutOfRange {
        line: usize,
        state: usize,
        num_states: usize,
    },
    #[error("line {line}: arc closes a cycle in the state graph")]
    CycleDetected { line: usize },
    #[error("line {line}: lattice declares zero arcs")]
    EmptyLattice { line: usize },
    #[error("line {line}: expected {expected} arc lines, found {got}")]
    ArcCountMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: invalid value in field '{field}': {reason}")]
    InvalidField {
        line: usize,
        field: &'static str,
        reason: String,
    },
}

/// Structural errors on otherwise well-formed lattices.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice '{utterance_id}' has no complete path from the initial state")]
    NoCompletePath { utterance_id: String },
}

//! Scoring, ROC/AUC/FAR metrics, and the ASR-output baseline.

mod baseline;
mod report;
mod roc;

pub use baseline::asr_output_baseline;
pub use report::{evaluate, EvalReport, REPORT_TPR};
pub use roc::{far_at_tpr, roc_curve, RocCurve, RocPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metrics need both classes present in the evaluation set")]
    SingleClass,
    #[error("evaluation set is empty")]
    EmptyInput,
    #[error("evaluation set contains an unlabeled sample")]
    UnlabeledInput,
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("structural error during scoring: {0}")]
    Structural(String),
    #[error("model scoring failed: {0}")]
    Scoring(String),
}

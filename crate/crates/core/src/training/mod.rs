//! Mini-batching, optimization, and training history.

mod adam;
mod batch;
mod run;

pub use adam::AdamState;
pub use batch::{make_batches, make_batches_in_order, GraphBatch};
pub use run::{train, Dataset};

use thiserror::Error;

use crate::models::ModelError;

/// Loop hyperparameters. The defaults are the artifact's own choices.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    /// Epochs without a validation-AUC improvement before stopping.
    pub early_stop_patience: usize,
    pub shuffle_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 20,
            early_stop_patience: 5,
            shuffle_seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 1 {
            return Err(TrainError::BadHyperparams("batch_size must be >= 1".into()));
        }
        if self.learning_rate < 0.0
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || self.adam_epsilon <= 0.0
        {
            return Err(TrainError::BadHyperparams(
                "learning_rate/beta/epsilon out of range".into(),
            ));
        }
        if self.early_stop_patience == 0 {
            return Err(TrainError::BadHyperparams(
                "early_stop_patience must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch (train_loss, validation_loss, validation_auc) plus the index of
/// the best epoch (1-based), once at least one epoch ran.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<(f64, f64, f64)>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    /// CSV rendering: `epoch,train_loss,val_loss,val_auc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_auc\n");
        for (i, (tl, vl, va)) in self.epochs.iter().enumerate() {
            out.push_str(&format!("{},{:.9},{:.9},{:.9}\n", i + 1, tl, vl, va));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training and validation splits must both be non-empty")]
    EmptySplit,
    #[error("bad hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch_index}: training diverged")]
    Diverged { epoch: usize, batch_index: usize },
    #[error("non-finite gradient in parameter '{param}' at step {step}")]
    NonFiniteGradient { param: String, step: usize },
    #[error("dataset contains an unlabeled sample")]
    UnlabeledSample,
    #[error("validation metric failed: {0}")]
    Metric(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

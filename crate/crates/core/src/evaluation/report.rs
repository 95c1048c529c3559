//! Scoring a labeled evaluation set and assembling the metric report.

use crate::lattice::{GraphSample, Label};
use crate::models::{model_forward, ModelConfig, ModelParams};
use crate::training::make_batches_in_order;

use super::roc::{far_at_tpr, roc_curve, RocCurve};
use super::MetricError;

/// Target TPR for the reported FAR operating point.
pub const REPORT_TPR: f64 = 0.99;

/// Evaluation output: curve-level metrics plus per-utterance scores in
/// corpus order.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub auc: f64,
    pub far_at_tpr99: f64,
    pub roc: RocCurve,
    /// (utterance_id, label, P(false trigger)).
    pub scores: Vec<(String, Label, f64)>,
}

impl EvalReport {
    /// Key-value summary text.
    pub fn summary(&self) -> String {
        let num_true = self
            .scores
            .iter()
            .filter(|(_, l, _)| *l == Label::TrueTrigger)
            .count();
        format!(
            "auc={:.6}\nfar_at_tpr99={:.6}\nnum_eval={}\nnum_true={}\nnum_false={}\n",
            self.auc,
            self.far_at_tpr99,
            self.scores.len(),
            num_true,
            self.scores.len() - num_true,
        )
    }

    /// CSV rendering: `utterance_id,label,score`.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("utterance_id,label,score\n");
        for (id, label, score) in &self.scores {
            out.push_str(&format!("{},{},{:.9}\n", id, label.as_str(), score));
        }
        out
    }
}

/// Score every sample (inference mode) and compute ROC metrics. The set must
/// be fully labeled with both classes present.
pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParams,
    eval_set: &[GraphSample],
) -> Result<EvalReport, MetricError> {
    if eval_set.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut scores = Vec::with_capacity(eval_set.len());
    for batch in make_batches_in_order(eval_set, 64) {
        let probs = model_forward(config, params, &batch)
            .map_err(|e| MetricError::Scoring(e.to_string()))?;
        for ((id, label), p) in batch
            .utterance_ids
            .iter()
            .zip(batch.labels.iter())
            .zip(probs)
        {
            let label = match label {
                Some(l) if *l != 0.0 => Label::FalseTrigger,
                Some(_) => Label::TrueTrigger,
                None => return Err(MetricError::UnlabeledInput),
            };
            scores.push((id.clone(), label, p));
        }
    }
    let values: Vec<f64> = scores.iter().map(|(_, _, s)| *s).collect();
    let truth: Vec<bool> = scores
        .iter()
        .map(|(_, l, _)| *l == Label::TrueTrigger)
        .collect();
    let roc = roc_curve(&values, &truth)?;
    Ok(EvalReport {
        auc: roc.auc,
        far_at_tpr99: far_at_tpr(&roc, REPORT_TPR),
        roc,
        scores,
    })
}

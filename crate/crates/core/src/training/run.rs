//! The optimization loop: shuffled zero-padded batches, mean BCE, Adam, and
//! early stopping on validation AUC.

use crate::evaluation::roc_curve;
use crate::lattice::GraphSample;
use crate::models::{forward_pass, init_params, model_forward, ModelConfig, ModelParams};
use crate::numerics::bce_loss;

use super::adam::AdamState;
use super::batch::{make_batches, make_batches_in_order};
use super::{Hyperparams, TrainError, TrainHistory};

/// Train/validation splits, already converted to graph samples.
pub struct Dataset<'a> {
    pub train: &'a [GraphSample],
    pub validation: &'a [GraphSample],
}

/// Train a model from scratch. Returns the parameters of the epoch with the
/// best validation AUC plus the per-epoch history. Fully deterministic given
/// `config.seed` and `hp.shuffle_seed`.
pub fn train(
    config: &ModelConfig,
    dataset: &Dataset,
    hp: &Hyperparams,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    hp.validate()?;
    let mut params = init_params(config, config.seed)?;
    let mut adam = AdamState::new(&params.params);
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, f64, ModelParams)> = None;

    for epoch in 1..=hp.epochs {
        let batches = make_batches(
            dataset.train,
            hp.batch_size,
            hp.shuffle_seed.wrapping_add(epoch as u64),
        );
        let mut loss_sum = 0.0;
        let mut sample_count = 0usize;
        for (batch_index, batch) in batches.iter().enumerate() {
            let mut fp = forward_pass(config, &params, batch, true)?;
            let loss_node = fp.bce_loss(batch)?;
            let loss = fp.tape.value(loss_node).get(0, 0);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, batch_index });
            }
            loss_sum += loss * batch.len() as f64;
            sample_count += batch.len();
            let grads = fp.backward(loss_node);
            params.zero_grads();
            fp.tape.accumulate_param_grads(&grads, &mut params.params);
            fp.apply_bn_updates(&mut params);
            adam.step(&mut params.params, hp, adam.steps() + 1)?;
        }
        let train_loss = loss_sum / sample_count as f64;

        let (val_loss, val_auc) = validation_metrics(config, &params, dataset.validation)?;
        history.epochs.push((train_loss, val_loss, val_auc));

        let improved = match &best {
            None => true,
            Some((_, best_auc, _)) => val_auc > *best_auc,
        };
        if improved {
            best = Some((epoch, val_auc, params.clone()));
        }
        let best_epoch = best.as_ref().map(|(e, _, _)| *e).unwrap_or(epoch);
        if epoch - best_epoch >= hp.early_stop_patience {
            break;
        }
    }

    match best {
        Some((epoch, _, best_params)) => {
            history.best_epoch = Some(epoch);
            Ok((best_params, history))
        }
        // epochs == 0: hand back the freshly initialized parameters
        None => Ok((params, history)),
    }
}

fn validation_metrics(
    config: &ModelConfig,
    params: &ModelParams,
    validation: &[GraphSample],
) -> Result<(f64, f64), TrainError> {
    let mut scores = Vec::with_capacity(validation.len());
    let mut labels = Vec::with_capacity(validation.len());
    let mut loss_sum = 0.0;
    for batch in make_batches_in_order(validation, 64) {
        let probs = model_forward(config, params, &batch)?;
        let batch_labels = batch
            .label_vector()
            .ok_or_else(|| TrainError::UnlabeledSample)?;
        for (p, y) in probs.iter().zip(&batch_labels) {
            loss_sum += bce_loss(*p, *y != 0.0);
            scores.push(*p);
            labels.push(*y != 0.0);
        }
    }
    let val_loss = loss_sum / validation.len() as f64;
    // labels here are "is false trigger"; the ROC wants "is true trigger"
    let truth: Vec<bool> = labels.iter().map(|l| !l).collect();
    let curve = roc_curve(&scores, &truth).map_err(|e| TrainError::Metric(e.to_string()))?;
    Ok((val_loss, curve.auc))
}

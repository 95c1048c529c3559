//! Tape-building forward passes for the four architectures.
//!
//! A batch is processed as one tall stacked matrix (`B·Nmax` rows); the
//! per-sample adjacency matrices and attention masks act block-wise. Padded
//! rows stay exactly zero through every layer: the adjacency has zero rows
//! and columns there, attention masks exclude them, and explicit row masks
//! re-zero anything a bias broadcast touched.

use std::rc::Rc;

use crate::numerics::{kernels, DenseMatrix, Gradients, NodeId, Parameter, Tape};
use crate::training::GraphBatch;

use super::config::{ModelConfig, Variant};
use super::params::{
    BatchNormBuffers, LinearIdx, Layout, ModelParams, ReadoutIdx, Structure,
};
use super::ModelError;

/// A completed forward pass: the tape plus the nodes tests and training need.
pub struct ForwardPass {
    pub tape: Tape,
    /// Final (B·Nmax)×H hidden state entering the pooled readout.
    pub hidden: NodeId,
    /// B×1 column of pre-sigmoid readout logits.
    pub logits: NodeId,
    /// B×1 column of P(false trigger).
    pub probs: NodeId,
    /// Attention probability nodes, one per (layer, head), sagnn variants only.
    pub attention: Vec<NodeId>,
}

impl ForwardPass {
    pub fn probabilities(&self) -> Vec<f64> {
        let m = self.tape.value(self.probs);
        (0..m.rows()).map(|i| m.get(i, 0)).collect()
    }

    /// Mean BCE over the batch, evaluated from the logits; fails if any
    /// sample is unlabeled.
    pub fn bce_loss(&mut self, batch: &GraphBatch) -> Result<NodeId, ModelError> {
        let labels = batch
            .label_vector()
            .ok_or_else(|| ModelError::BatchMismatch("batch contains unlabeled samples".into()))?;
        Ok(self.tape.bce_logits_mean(self.logits, Rc::new(labels)))
    }

    /// Fold the tape's training-mode batch statistics into the running
    /// buffers (the trainer calls this once per optimization step).
    pub fn apply_bn_updates(&self, params: &mut ModelParams) {
        for stats in self.tape.bn_batch_stats() {
            params.bn[stats.state_index].update(&stats.mean, &stats.var);
        }
    }

    pub fn backward(&self, loss: NodeId) -> Gradients {
        self.tape.backward(loss)
    }
}

/// Inference-mode forward: per-sample P(false trigger).
pub fn model_forward(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &GraphBatch,
) -> Result<Vec<f64>, ModelError> {
    Ok(forward_pass(config, params, batch, false)?.probabilities())
}

/// Build the full forward tape for a batch.
///
/// Training mode uses in-batch statistics for batch norm (the pending
/// running-stat updates stay on the tape until
/// [`ForwardPass::apply_bn_updates`]); inference mode uses the stored running
/// statistics.
pub fn forward_pass(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &GraphBatch,
    training: bool,
) -> Result<ForwardPass, ModelError> {
    config.validate()?;
    let layout = params.layout();
    forward_from_parts(config, &layout, &params.params, &params.bn, batch, training)
}

/// Forward over raw parts; lets the gradient checker re-evaluate the loss
/// while it perturbs individual parameter entries in place.
pub(crate) fn forward_from_parts(
    config: &ModelConfig,
    layout: &Layout,
    params: &[Parameter],
    bn: &[BatchNormBuffers],
    batch: &GraphBatch,
    training: bool,
) -> Result<ForwardPass, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::BatchMismatch("empty batch".into()));
    }
    if batch.features[0].cols() != config.input_dim {
        return Err(ModelError::BatchMismatch(format!(
            "batch feature width {} != configured input_dim {}",
            batch.features[0].cols(),
            config.input_dim
        )));
    }

    let mut tape = Tape::new(batch.nmax);
    let mut bank = NodeBank::new(params);
    let valid = Rc::new(batch.stacked_validity());
    let adj = Rc::new(batch.adjacency.clone());
    let x = tape.leaf(batch.stacked_features());
    let mut attention = Vec::new();

    let (hidden, readout) = match &layout.structure {
        Structure::Gcn { layers, readout } => {
            let mut h = x;
            for layer in layers {
                h = gcn_layer(&mut tape, &mut bank, h, &adj, *layer);
            }
            (h, readout)
        }
        Structure::Resgcn {
            input,
            blocks,
            readout,
        } => {
            let mut h = linear(&mut tape, &mut bank, x, *input);
            h = tape.mask_rows(h, valid.clone());
            for block in blocks {
                h = residual_block(
                    &mut tape, &mut bank, h, &adj, &valid, bn, block, training,
                );
            }
            (h, readout)
        }
        Structure::Sagnn {
            input,
            layers,
            readout,
        } => {
            let masks = Rc::new(attention_masks(batch, config.variant == Variant::MaskedSagnn));
            let scale = if config.attention_scaling {
                1.0 / (config.head_dim as f64).sqrt()
            } else {
                1.0
            };
            let mut h = linear(&mut tape, &mut bank, x, *input);
            h = tape.mask_rows(h, valid.clone());
            for layer in layers {
                let (out, probs) =
                    sa_layer(&mut tape, &mut bank, h, &masks, &valid, scale, layer);
                attention.extend(probs);
                h = out;
            }
            (h, readout)
        }
    };

    let (logits, probs) = readout_head(&mut tape, &mut bank, hidden, &valid, readout);
    Ok(ForwardPass {
        tape,
        logits,
        probs,
        attention,
    })
}

/// One graph convolution: ReLU(A · (H·W + b)), block-wise over the batch.
fn gcn_layer(
    tape: &mut Tape,
    bank: &mut NodeBank,
    h: NodeId,
    adj: &Rc<Vec<DenseMatrix>>,
    layer: LinearIdx,
) -> NodeId {
    let m = linear(tape, bank, h, layer);
    let agg = tape.block_adj_matmul(adj.clone(), m);
    tape.relu(agg)
}

/// Residual block: ReLU(BN₂(GC₂(ReLU(BN₁(GC₁(H))))) + H), where GC is the
/// un-activated A·(H·W + b) and batch norm runs over valid rows only.
#[allow(clippy::too_many_arguments)]
fn residual_block(
    tape: &mut Tape,
    bank: &mut NodeBank,
    h: NodeId,
    adj: &Rc<Vec<DenseMatrix>>,
    valid: &Rc<Vec<f64>>,
    bn: &[BatchNormBuffers],
    block: &super::params::BlockIdx,
    training: bool,
) -> NodeId {
    let gc1 = {
        let m = linear(tape, bank, h, block.gc1);
        tape.block_adj_matmul(adj.clone(), m)
    };
    let n1 = batch_norm_node(tape, bank, gc1, valid, bn, block.bn1, block.bn1_state, training);
    let a1 = tape.relu(n1);
    let gc2 = {
        let m = linear(tape, bank, a1, block.gc2);
        tape.block_adj_matmul(adj.clone(), m)
    };
    let n2 = batch_norm_node(tape, bank, gc2, valid, bn, block.bn2, block.bn2_state, training);
    let sum = tape.add(n2, h);
    tape.relu(sum)
}

/// One multi-head self-attention layer. Per head: Q/K/V projections, masked
/// row softmax of Q·Kᵀ, attention-weighted value sum; heads concatenate,
/// project back to the hidden width, and pass through the per-layer
/// scale/shift. Padded rows are masked out of the attention and the output.
fn sa_layer(
    tape: &mut Tape,
    bank: &mut NodeBank,
    h: NodeId,
    masks: &Rc<Vec<DenseMatrix>>,
    valid: &Rc<Vec<f64>>,
    scale: f64,
    layer: &super::params::SaLayerIdx,
) -> (NodeId, Vec<NodeId>) {
    let mut head_outputs = Vec::with_capacity(layer.heads.len());
    let mut attention = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let q = linear(tape, bank, h, head.q);
        let k = linear(tape, bank, h, head.k);
        let v = linear(tape, bank, h, head.v);
        let logits = tape.block_gram(q, k, scale);
        let probs = tape.block_masked_softmax(logits, masks.clone(), valid.clone());
        attention.push(probs);
        head_outputs.push(tape.block_attend(probs, v));
    }
    let concat = tape.concat_cols(&head_outputs);
    let proj = linear(tape, bank, concat, layer.proj);
    let scale_node = bank.get(tape, layer.norm.scale);
    let shift_node = bank.get(tape, layer.norm.shift);
    let normed = tape.channel_affine(proj, scale_node, shift_node);
    (tape.mask_rows(normed, valid.clone()), attention)
}

/// Pool the valid rows of each sample and apply the shared head:
/// sigmoid(w_out · ReLU(W_fc·e + b_fc) + b_out). Returns (logits, probs).
fn readout_head(
    tape: &mut Tape,
    bank: &mut NodeBank,
    hidden: NodeId,
    valid: &Rc<Vec<f64>>,
    readout: &ReadoutIdx,
) -> (NodeId, NodeId) {
    let pooled = tape.block_mean_pool(hidden, valid.clone());
    let fc = linear(tape, bank, pooled, readout.fc);
    let act = tape.relu(fc);
    let out = linear(tape, bank, act, readout.out);
    (out, tape.sigmoid(out))
}

fn linear(tape: &mut Tape, bank: &mut NodeBank, x: NodeId, idx: LinearIdx) -> NodeId {
    let w = bank.get(tape, idx.weight);
    let b = bank.get(tape, idx.bias);
    let m = tape.matmul(x, w);
    tape.add_bias(m, b)
}

#[allow(clippy::too_many_arguments)]
fn batch_norm_node(
    tape: &mut Tape,
    bank: &mut NodeBank,
    x: NodeId,
    valid: &Rc<Vec<f64>>,
    bn: &[BatchNormBuffers],
    affine: super::params::AffineIdx,
    state_index: usize,
    training: bool,
) -> NodeId {
    let scale = bank.get(tape, affine.scale);
    let shift = bank.get(tape, affine.shift);
    let buffers = &bn[state_index];
    if training {
        tape.batch_norm_train(x, scale, shift, valid.clone(), buffers.epsilon, state_index)
    } else {
        tape.batch_norm_eval(
            x,
            scale,
            shift,
            valid.clone(),
            buffers.running_mean.clone(),
            buffers.running_var.clone(),
            buffers.epsilon,
        )
    }
}

/// Binary attention masks per sample: the adjacency nonzero pattern for the
/// masked variant, or all valid arc pairs for the unmasked one.
fn attention_masks(batch: &GraphBatch, masked: bool) -> Vec<DenseMatrix> {
    batch
        .adjacency
        .iter()
        .zip(&batch.validity)
        .map(|(adj, valid)| {
            let n = batch.nmax;
            let mut mask = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let on = if masked {
                        adj.get(i, j) != 0.0
                    } else {
                        valid[i] != 0.0 && valid[j] != 0.0
                    };
                    if on {
                        mask.set(i, j, 1.0);
                    }
                }
            }
            mask
        })
        .collect()
}

/// Per-node reference for the graph convolution: f(Σ_j A(i,j)·(H(j)·W + b))
/// over the neighbors j of arc i (including i itself), with f = ReLU.
///
/// This is the hand-rolled oracle the matrix-form layer is checked against.
pub fn gc_aggregate_node(
    i: usize,
    h: &DenseMatrix,
    a: &DenseMatrix,
    w: &DenseMatrix,
    bias: &DenseMatrix,
) -> Vec<f64> {
    assert_eq!(a.rows(), h.rows());
    assert_eq!(bias.cols(), w.cols());
    let mut acc = vec![0.0; w.cols()];
    for j in 0..a.cols() {
        let a_ij = a.get(i, j);
        if a_ij == 0.0 {
            continue;
        }
        // H(j)·W + b
        for c in 0..w.cols() {
            let mut hw = 0.0;
            for (k, &h_jk) in h.row(j).iter().enumerate() {
                if h_jk != 0.0 {
                    hw += h_jk * w.get(k, c);
                }
            }
            acc[c] += a_ij * (hw + bias.get(0, c));
        }
    }
    acc.iter().map(|&v| kernels::relu(v)).collect()
}

/// Reference scalar readout used in unit tests:
/// sigmoid(w_out · ReLU(W_fc·e + b_fc) + b_out).
pub fn readout_scalar(
    embedding: &[f64],
    fc_weight: &DenseMatrix,
    fc_bias: &DenseMatrix,
    out_weight: &DenseMatrix,
    out_bias: &DenseMatrix,
) -> f64 {
    assert_eq!(fc_weight.rows(), embedding.len());
    let mut z = 0.0;
    for c in 0..fc_weight.cols() {
        let mut acc = fc_bias.get(0, c);
        for (k, &e) in embedding.iter().enumerate() {
            acc += e * fc_weight.get(k, c);
        }
        z += kernels::relu(acc) * out_weight.get(c, 0);
    }
    kernels::sigmoid(z + out_bias.get(0, 0))
}

struct NodeBank<'a> {
    params: &'a [Parameter],
    cache: Vec<Option<NodeId>>,
}

impl<'a> NodeBank<'a> {
    fn new(params: &'a [Parameter]) -> Self {
        NodeBank {
            params,
            cache: vec![None; params.len()],
        }
    }

    fn get(&mut self, tape: &mut Tape, index: usize) -> NodeId {
        if let Some(id) = self.cache[index] {
            return id;
        }
        let id = tape.param(&self.params[index], index);
        self.cache[index] = Some(id);
        id
    }
}

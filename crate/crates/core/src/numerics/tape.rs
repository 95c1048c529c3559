//! Reverse-mode differentiation over a linear tape of dense-matrix ops.
//!
//! A forward pass appends nodes; `backward` walks the tape in reverse and
//! accumulates gradients. Variable-size graphs are handled by stacking the
//! samples of a batch into one tall matrix of `batch_len × block_rows` rows;
//! the `block_*` ops apply a per-sample matrix (adjacency, attention mask)
//! to each block independently.

use std::rc::Rc;

use super::kernels::{self, BCE_EPSILON};
use super::matrix::DenseMatrix;
use super::param::Parameter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Batch statistics captured by a training-mode batch-norm node, used both
/// for the backward pass and for the caller's running-statistics update.
#[derive(Debug, Clone)]
pub struct BnBatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
    /// Index of the batch-norm buffer this node belongs to (caller-defined).
    pub state_index: usize,
}

enum Op {
    Leaf {
        param: Option<usize>,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    AddBias {
        a: NodeId,
        bias: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Relu {
        a: NodeId,
    },
    Sigmoid {
        a: NodeId,
    },
    ChannelAffine {
        a: NodeId,
        scale: NodeId,
        shift: NodeId,
    },
    MaskRows {
        a: NodeId,
        valid: Rc<Vec<f64>>,
    },
    BlockAdjMatmul {
        h: NodeId,
        adj: Rc<Vec<DenseMatrix>>,
    },
    BlockGram {
        q: NodeId,
        k: NodeId,
        scale: f64,
    },
    BlockMaskedSoftmax {
        logits: NodeId,
        masks: Rc<Vec<DenseMatrix>>,
        row_valid: Rc<Vec<f64>>,
    },
    BlockAttend {
        probs: NodeId,
        v: NodeId,
    },
    ConcatCols {
        parts: Vec<NodeId>,
    },
    BlockMeanPool {
        h: NodeId,
        valid: Rc<Vec<f64>>,
    },
    BatchNormTrain {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        valid: Rc<Vec<f64>>,
        inv_std: Vec<f64>,
        stats: BnBatchStats,
    },
    BatchNormEval {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        valid: Rc<Vec<f64>>,
        mean: Vec<f64>,
        var: Vec<f64>,
        epsilon: f64,
    },
    BceLogitsMean {
        logits: NodeId,
        labels: Rc<Vec<f64>>,
    },
}

pub struct Tape {
    values: Vec<DenseMatrix>,
    ops: Vec<Op>,
    /// Rows per sample block for the `block_*` ops.
    block_rows: usize,
}

impl Tape {
    /// `block_rows` is the padded per-sample row count (Nmax) used by the
    /// block-wise ops.
    pub fn new(block_rows: usize) -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            block_rows,
        }
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.values[id.0]
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite forward value");
        self.values.push(value);
        self.ops.push(op);
        NodeId(self.values.len() - 1)
    }

    /// Constant input (no gradient tracked beyond this node).
    pub fn leaf(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Leaf { param: None })
    }

    /// Parameter input; `index` keys the gradient back to the caller's
    /// parameter collection after `backward`.
    pub fn param(&mut self, p: &Parameter, index: usize) -> NodeId {
        self.push(p.value.clone(), Op::Leaf { param: Some(index) })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a.0].matmul(&self.values[b.0]);
        self.push(v, Op::MatMul { a, b })
    }

    /// Broadcast a 1×C bias over every row.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let x = &self.values[a.0];
        let b = &self.values[bias.0];
        assert_eq!(b.rows(), 1, "bias must be a row vector");
        assert_eq!(b.cols(), x.cols(), "bias width mismatch");
        let mut v = x.clone();
        for i in 0..v.rows() {
            for (o, bb) in v.row_mut(i).iter_mut().zip(b.row(0)) {
                *o += bb;
            }
        }
        self.push(v, Op::AddBias { a, bias })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.values[a.0].clone();
        v.add_assign(&self.values[b.0]);
        self.push(v, Op::Add { a, b })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.values[a.0].clone();
        for x in v.data_mut() {
            *x = kernels::relu(*x);
        }
        self.push(v, Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut v = self.values[a.0].clone();
        for x in v.data_mut() {
            *x = kernels::sigmoid(*x);
        }
        self.push(v, Op::Sigmoid { a })
    }

    /// Per-channel scale and shift: out[i][c] = a[i][c]·scale[c] + shift[c].
    pub fn channel_affine(&mut self, a: NodeId, scale: NodeId, shift: NodeId) -> NodeId {
        let x = &self.values[a.0];
        let s = &self.values[scale.0];
        let t = &self.values[shift.0];
        assert_eq!(s.cols(), x.cols());
        assert_eq!(t.cols(), x.cols());
        let mut v = x.clone();
        for i in 0..v.rows() {
            for ((o, ss), tt) in v.row_mut(i).iter_mut().zip(s.row(0)).zip(t.row(0)) {
                *o = *o * ss + tt;
            }
        }
        self.push(v, Op::ChannelAffine { a, scale, shift })
    }

    /// Zero the rows with `valid[i] == 0`; pass the rest through.
    pub fn mask_rows(&mut self, a: NodeId, valid: Rc<Vec<f64>>) -> NodeId {
        let x = &self.values[a.0];
        assert_eq!(valid.len(), x.rows());
        let mut v = x.clone();
        for (i, &f) in valid.iter().enumerate() {
            if f == 0.0 {
                v.row_mut(i).fill(0.0);
            }
        }
        self.push(v, Op::MaskRows { a, valid })
    }

    /// Per-block product with a constant matrix: out_b = adj[b] · h_b.
    pub fn block_adj_matmul(&mut self, adj: Rc<Vec<DenseMatrix>>, h: NodeId) -> NodeId {
        let x = &self.values[h.0];
        let n = self.block_rows;
        assert_eq!(x.rows(), n * adj.len(), "stacked rows mismatch");
        let mut v = DenseMatrix::zeros(x.rows(), x.cols());
        for (b, a) in adj.iter().enumerate() {
            assert_eq!((a.rows(), a.cols()), (n, n));
            let base = b * n;
            for i in 0..n {
                for k in 0..n {
                    let a_ik = a.get(i, k);
                    if a_ik == 0.0 {
                        continue;
                    }
                    let src = x.row(base + k);
                    for (o, s) in v.row_mut(base + i).iter_mut().zip(src) {
                        *o += a_ik * s;
                    }
                }
            }
        }
        self.push(v, Op::BlockAdjMatmul { h, adj })
    }

    /// Per-block attention logits: out_b = (q_b · k_bᵀ) · scale.
    pub fn block_gram(&mut self, q: NodeId, k: NodeId, scale: f64) -> NodeId {
        let qv = &self.values[q.0];
        let kv = &self.values[k.0];
        let n = self.block_rows;
        assert_eq!(qv.rows(), kv.rows());
        assert_eq!(qv.cols(), kv.cols());
        assert_eq!(qv.rows() % n, 0);
        let blocks = qv.rows() / n;
        let mut v = DenseMatrix::zeros(qv.rows(), n);
        for b in 0..blocks {
            let base = b * n;
            for i in 0..n {
                let qi = qv.row(base + i);
                let out = v.row_mut(base + i);
                for (j, o) in out.iter_mut().enumerate() {
                    let kj = kv.row(base + j);
                    let mut acc = 0.0;
                    for (a, c) in qi.iter().zip(kj) {
                        acc += a * c;
                    }
                    *o = acc * scale;
                }
            }
        }
        self.push(v, Op::BlockGram { q, k, scale })
    }

    /// Per-block masked row softmax. Rows with `row_valid == 0` become exact
    /// zero rows; other rows are normalized over their masked-in entries.
    pub fn block_masked_softmax(
        &mut self,
        logits: NodeId,
        masks: Rc<Vec<DenseMatrix>>,
        row_valid: Rc<Vec<f64>>,
    ) -> NodeId {
        let l = &self.values[logits.0];
        let n = self.block_rows;
        assert_eq!(l.cols(), n);
        assert_eq!(l.rows(), n * masks.len());
        assert_eq!(row_valid.len(), l.rows());
        let mut v = DenseMatrix::zeros(l.rows(), n);
        for (b, mask) in masks.iter().enumerate() {
            let base = b * n;
            for i in 0..n {
                if row_valid[base + i] == 0.0 {
                    continue;
                }
                debug_assert!(
                    mask.row(i).iter().any(|&m| m != 0.0),
                    "valid row with empty mask"
                );
                kernels::masked_softmax_row(l.row(base + i), mask.row(i), v.row_mut(base + i));
            }
        }
        self.push(
            v,
            Op::BlockMaskedSoftmax {
                logits,
                masks,
                row_valid,
            },
        )
    }

    /// Per-block application of attention: out_b = probs_b · v_b.
    pub fn block_attend(&mut self, probs: NodeId, v: NodeId) -> NodeId {
        let p = &self.values[probs.0];
        let x = &self.values[v.0];
        let n = self.block_rows;
        assert_eq!(p.cols(), n);
        assert_eq!(p.rows(), x.rows());
        let blocks = p.rows() / n;
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        for b in 0..blocks {
            let base = b * n;
            for i in 0..n {
                for j in 0..n {
                    let pij = p.get(base + i, j);
                    if pij == 0.0 {
                        continue;
                    }
                    let src = x.row(base + j);
                    for (o, s) in out.row_mut(base + i).iter_mut().zip(src) {
                        *o += pij * s;
                    }
                }
            }
        }
        self.push(out, Op::BlockAttend { probs, v })
    }

    /// Column-wise concatenation (multi-head outputs).
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.values[parts[0].0].rows();
        let total: usize = parts.iter().map(|p| self.values[p.0].cols()).sum();
        let mut v = DenseMatrix::zeros(rows, total);
        for i in 0..rows {
            let out = v.row_mut(i);
            let mut off = 0;
            for p in parts {
                let src = self.values[p.0].row(i);
                out[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        self.push(v, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Mean over the valid rows of each block: (B·N)×C → B×C.
    pub fn block_mean_pool(&mut self, h: NodeId, valid: Rc<Vec<f64>>) -> NodeId {
        let x = &self.values[h.0];
        let n = self.block_rows;
        assert_eq!(valid.len(), x.rows());
        let blocks = x.rows() / n;
        let mut v = DenseMatrix::zeros(blocks, x.cols());
        for b in 0..blocks {
            let base = b * n;
            let count = valid[base..base + n].iter().filter(|&&f| f != 0.0).count();
            assert!(count > 0, "block with no valid rows");
            let inv = 1.0 / count as f64;
            for i in 0..n {
                if valid[base + i] == 0.0 {
                    continue;
                }
                let src = x.row(base + i);
                for (o, s) in v.row_mut(b).iter_mut().zip(src) {
                    *o += s;
                }
            }
            for o in v.row_mut(b) {
                *o *= inv;
            }
        }
        self.push(v, Op::BlockMeanPool { h, valid })
    }

    /// Training-mode batch norm over the valid rows; padded rows come out
    /// zero. `state_index` tags the node for the caller's running-stat update.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        valid: Rc<Vec<f64>>,
        epsilon: f64,
        state_index: usize,
    ) -> NodeId {
        let xv = &self.values[x.0];
        let s = &self.values[scale.0];
        let t = &self.values[shift.0];
        let (mean, var, count) = kernels::batch_stats(xv, &valid);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
        let v = kernels::bn_apply(xv, &valid, &mean, &var, s.row(0), t.row(0), epsilon);
        let stats = BnBatchStats {
            mean,
            var,
            count,
            state_index,
        };
        self.push(
            v,
            Op::BatchNormTrain {
                x,
                scale,
                shift,
                valid,
                inv_std,
                stats,
            },
        )
    }

    /// Inference-mode batch norm using fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        valid: Rc<Vec<f64>>,
        mean: Vec<f64>,
        var: Vec<f64>,
        epsilon: f64,
    ) -> NodeId {
        let xv = &self.values[x.0];
        let s = &self.values[scale.0];
        let t = &self.values[shift.0];
        let v = kernels::bn_apply(xv, &valid, &mean, &var, s.row(0), t.row(0), epsilon);
        self.push(
            v,
            Op::BatchNormEval {
                x,
                scale,
                shift,
                valid,
                mean,
                var,
                epsilon,
            },
        )
    }

    /// Mean binary cross entropy over a B×1 column of pre-sigmoid logits.
    /// `labels[b]` is 1.0 for the positive (false-trigger) class.
    pub fn bce_logits_mean(&mut self, logits: NodeId, labels: Rc<Vec<f64>>) -> NodeId {
        let z = &self.values[logits.0];
        assert_eq!(z.cols(), 1);
        assert_eq!(z.rows(), labels.len());
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            total += kernels::bce_with_logits(z.get(i, 0), y != 0.0);
        }
        let v = DenseMatrix::scalar(total / labels.len() as f64);
        self.push(v, Op::BceLogitsMean { logits, labels })
    }

    /// Batch statistics of every training-mode batch-norm node, in tape order.
    pub fn bn_batch_stats(&self) -> Vec<&BnBatchStats> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::BatchNormTrain { stats, .. } => Some(stats),
                _ => None,
            })
            .collect()
    }

    /// Reverse pass from a scalar node. Returns per-node gradients; use
    /// [`Tape::accumulate_param_grads`] to fold them into parameters.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        let lv = &self.values[loss.0];
        assert_eq!((lv.rows(), lv.cols()), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.values.len()];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backstep(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accum(&self, grads: &mut [Option<DenseMatrix>], id: NodeId, inc: DenseMatrix) {
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&inc),
            slot @ None => *slot = Some(inc),
        }
    }

    fn backstep(&self, idx: usize, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let n = self.block_rows;
        match &self.ops[idx] {
            Op::Leaf { .. } => {}
            Op::MatMul { a, b } => {
                let da = g.matmul_nt(&self.values[b.0]);
                let db = self.values[a.0].matmul_tn(g);
                self.accum(grads, *a, da);
                self.accum(grads, *b, db);
            }
            Op::AddBias { a, bias } => {
                self.accum(grads, *a, g.clone());
                let mut db = DenseMatrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (o, x) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                self.accum(grads, *bias, db);
            }
            Op::Add { a, b } => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Relu { a } => {
                let x = &self.values[a.0];
                let mut da = g.clone();
                for (d, v) in da.data_mut().iter_mut().zip(x.data()) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accum(grads, *a, da);
            }
            Op::Sigmoid { a } => {
                let y = &self.values[idx];
                let mut da = g.clone();
                for (d, s) in da.data_mut().iter_mut().zip(y.data()) {
                    *d *= s * (1.0 - s);
                }
                self.accum(grads, *a, da);
            }
            Op::ChannelAffine { a, scale, shift } => {
                let x = &self.values[a.0];
                let s = &self.values[scale.0];
                let mut da = g.clone();
                let mut ds = DenseMatrix::zeros(1, x.cols());
                let mut dt = DenseMatrix::zeros(1, x.cols());
                for i in 0..x.rows() {
                    let gr = g.row(i);
                    let xr = x.row(i);
                    let dar = da.row_mut(i);
                    for c in 0..x.cols() {
                        dar[c] = gr[c] * s.get(0, c);
                        ds.row_mut(0)[c] += gr[c] * xr[c];
                        dt.row_mut(0)[c] += gr[c];
                    }
                }
                self.accum(grads, *a, da);
                self.accum(grads, *scale, ds);
                self.accum(grads, *shift, dt);
            }
            Op::MaskRows { a, valid } => {
                let mut da = g.clone();
                for (i, &f) in valid.iter().enumerate() {
                    if f == 0.0 {
                        da.row_mut(i).fill(0.0);
                    }
                }
                self.accum(grads, *a, da);
            }
            Op::BlockAdjMatmul { h, adj } => {
                // dH_b += adj_bᵀ · g_b
                let mut dh = DenseMatrix::zeros(g.rows(), g.cols());
                for (b, a) in adj.iter().enumerate() {
                    let base = b * n;
                    for i in 0..n {
                        let a_row = a.row(i);
                        let src = g.row(base + i);
                        for (k, &a_ik) in a_row.iter().enumerate() {
                            if a_ik == 0.0 {
                                continue;
                            }
                            for (o, s) in dh.row_mut(base + k).iter_mut().zip(src) {
                                *o += a_ik * s;
                            }
                        }
                    }
                }
                self.accum(grads, *h, dh);
            }
            Op::BlockGram { q, k, scale } => {
                let qv = &self.values[q.0];
                let kv = &self.values[k.0];
                let blocks = qv.rows() / n;
                let mut dq = DenseMatrix::zeros(qv.rows(), qv.cols());
                let mut dk = DenseMatrix::zeros(kv.rows(), kv.cols());
                for b in 0..blocks {
                    let base = b * n;
                    for i in 0..n {
                        for j in 0..n {
                            let gij = g.get(base + i, j);
                            if gij == 0.0 {
                                continue;
                            }
                            let w = gij * scale;
                            // dQ_i += w·K_j ; dK_j += w·Q_i
                            for (o, kc) in dq.row_mut(base + i).iter_mut().zip(kv.row(base + j)) {
                                *o += w * kc;
                            }
                            for (o, qc) in dk.row_mut(base + j).iter_mut().zip(qv.row(base + i)) {
                                *o += w * qc;
                            }
                        }
                    }
                }
                self.accum(grads, *q, dq);
                self.accum(grads, *k, dk);
            }
            Op::BlockMaskedSoftmax {
                logits,
                masks,
                row_valid,
            } => {
                let p = &self.values[idx];
                let mut dl = DenseMatrix::zeros(p.rows(), p.cols());
                for (b, mask) in masks.iter().enumerate() {
                    let base = b * n;
                    for i in 0..n {
                        if row_valid[base + i] == 0.0 {
                            continue;
                        }
                        let p_row = p.row(base + i);
                        let g_row = g.row(base + i);
                        let m_row = mask.row(i);
                        let mut dot = 0.0;
                        for j in 0..n {
                            if m_row[j] != 0.0 {
                                dot += p_row[j] * g_row[j];
                            }
                        }
                        let out = dl.row_mut(base + i);
                        for j in 0..n {
                            if m_row[j] != 0.0 {
                                out[j] = p_row[j] * (g_row[j] - dot);
                            }
                        }
                    }
                }
                self.accum(grads, *logits, dl);
            }
            Op::BlockAttend { probs, v } => {
                let p = &self.values[probs.0];
                let xv = &self.values[v.0];
                let blocks = p.rows() / n;
                let mut dp = DenseMatrix::zeros(p.rows(), p.cols());
                let mut dv = DenseMatrix::zeros(xv.rows(), xv.cols());
                for b in 0..blocks {
                    let base = b * n;
                    for i in 0..n {
                        for j in 0..n {
                            // dP[i][j] += g_i · V_j
                            let g_row = g.row(base + i);
                            let vj = xv.row(base + j);
                            let mut acc = 0.0;
                            for (gg, vv) in g_row.iter().zip(vj) {
                                acc += gg * vv;
                            }
                            dp.row_mut(base + i)[j] += acc;
                            // dV_j += P[i][j] · g_i
                            let pij = p.get(base + i, j);
                            if pij != 0.0 {
                                for (o, gg) in dv.row_mut(base + j).iter_mut().zip(g_row) {
                                    *o += pij * gg;
                                }
                            }
                        }
                    }
                }
                self.accum(grads, *probs, dp);
                self.accum(grads, *v, dv);
            }
            Op::ConcatCols { parts } => {
                let mut off = 0;
                for p in parts {
                    let w = self.values[p.0].cols();
                    let mut dp = DenseMatrix::zeros(g.rows(), w);
                    for i in 0..g.rows() {
                        dp.row_mut(i).copy_from_slice(&g.row(i)[off..off + w]);
                    }
                    self.accum(grads, *p, dp);
                    off += w;
                }
            }
            Op::BlockMeanPool { h, valid } => {
                let x = &self.values[h.0];
                let blocks = x.rows() / n;
                let mut dh = DenseMatrix::zeros(x.rows(), x.cols());
                for b in 0..blocks {
                    let base = b * n;
                    let count = valid[base..base + n].iter().filter(|&&f| f != 0.0).count();
                    let inv = 1.0 / count as f64;
                    let g_row = g.row(b);
                    for i in 0..n {
                        if valid[base + i] == 0.0 {
                            continue;
                        }
                        for (o, gg) in dh.row_mut(base + i).iter_mut().zip(g_row) {
                            *o += gg * inv;
                        }
                    }
                }
                self.accum(grads, *h, dh);
            }
            Op::BatchNormTrain {
                x,
                scale,
                shift,
                valid,
                inv_std,
                stats,
            } => {
                let xv = &self.values[x.0];
                let s = &self.values[scale.0];
                let cols = xv.cols();
                let m = stats.count as f64;
                // accumulate per-channel sums over valid rows
                let mut dxhat_sum = vec![0.0; cols];
                let mut dxhat_dot_xhat = vec![0.0; cols];
                let mut ds = DenseMatrix::zeros(1, cols);
                let mut dt = DenseMatrix::zeros(1, cols);
                for (i, &f) in valid.iter().enumerate() {
                    if f == 0.0 {
                        continue;
                    }
                    let gr = g.row(i);
                    let xr = xv.row(i);
                    for c in 0..cols {
                        let xhat = (xr[c] - stats.mean[c]) * inv_std[c];
                        let dxhat = gr[c] * s.get(0, c);
                        dxhat_sum[c] += dxhat;
                        dxhat_dot_xhat[c] += dxhat * xhat;
                        ds.row_mut(0)[c] += gr[c] * xhat;
                        dt.row_mut(0)[c] += gr[c];
                    }
                }
                let mut dx = DenseMatrix::zeros(xv.rows(), cols);
                for (i, &f) in valid.iter().enumerate() {
                    if f == 0.0 {
                        continue;
                    }
                    let gr = g.row(i);
                    let xr = xv.row(i);
                    let out = dx.row_mut(i);
                    for c in 0..cols {
                        let xhat = (xr[c] - stats.mean[c]) * inv_std[c];
                        let dxhat = gr[c] * s.get(0, c);
                        out[c] = inv_std[c]
                            * (dxhat - dxhat_sum[c] / m - xhat * dxhat_dot_xhat[c] / m);
                    }
                }
                self.accum(grads, *x, dx);
                self.accum(grads, *scale, ds);
                self.accum(grads, *shift, dt);
            }
            Op::BatchNormEval {
                x,
                scale,
                shift,
                valid,
                var,
                epsilon,
                mean,
            } => {
                let xv = &self.values[x.0];
                let s = &self.values[scale.0];
                let cols = xv.cols();
                let mut dx = DenseMatrix::zeros(xv.rows(), cols);
                let mut ds = DenseMatrix::zeros(1, cols);
                let mut dt = DenseMatrix::zeros(1, cols);
                for (i, &f) in valid.iter().enumerate() {
                    if f == 0.0 {
                        continue;
                    }
                    let gr = g.row(i);
                    let xr = xv.row(i);
                    let out = dx.row_mut(i);
                    for c in 0..cols {
                        let inv_std = 1.0 / (var[c] + epsilon).sqrt();
                        let xhat = (xr[c] - mean[c]) * inv_std;
                        out[c] = gr[c] * s.get(0, c) * inv_std;
                        ds.row_mut(0)[c] += gr[c] * xhat;
                        dt.row_mut(0)[c] += gr[c];
                    }
                }
                self.accum(grads, *x, dx);
                self.accum(grads, *scale, ds);
                self.accum(grads, *shift, dt);
            }
            Op::BceLogitsMean { logits, labels } => {
                let z = &self.values[logits.0];
                let scale = g.get(0, 0) / labels.len() as f64;
                let mut dz = DenseMatrix::zeros(z.rows(), 1);
                for (i, &y) in labels.iter().enumerate() {
                    let p = kernels::sigmoid(z.get(i, 0));
                    // zero gradient in the clamped region
                    if p > BCE_EPSILON && p < 1.0 - BCE_EPSILON {
                        dz.set(i, 0, scale * (p - y));
                    }
                }
                self.accum(grads, *logits, dz);
            }
        }
    }

    /// Fold leaf gradients back into the caller's parameter collection.
    pub fn accumulate_param_grads(&self, gradients: &Gradients, params: &mut [Parameter]) {
        for (idx, op) in self.ops.iter().enumerate() {
            if let Op::Leaf { param: Some(pi) } = op {
                if let Some(g) = &gradients.grads[idx] {
                    params[*pi].gradient.add_assign(g);
                }
            }
        }
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads[id.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, rows: &[Vec<f64>]) -> NodeId {
        tape.leaf(DenseMatrix::from_rows(rows))
    }

    /// Finite-difference check for a scalar function of one leaf matrix.
    fn fd_check(
        build: impl Fn(&mut Tape, NodeId) -> NodeId,
        x0: DenseMatrix,
        block_rows: usize,
    ) -> f64 {
        let eval = |x: &DenseMatrix| {
            let mut tape = Tape::new(block_rows);
            let xid = tape.leaf(x.clone());
            let loss = build(&mut tape, xid);
            tape.value(loss).get(0, 0)
        };
        let mut tape = Tape::new(block_rows);
        let xid = tape.leaf(x0.clone());
        let loss = build(&mut tape, xid);
        let grads = tape.backward(loss);
        let analytic = grads.get(xid).unwrap().clone();
        let eps = 1e-6;
        let mut worst = 0.0f64;
        for e in 0..x0.len() {
            let mut xp = x0.clone();
            xp.data_mut()[e] += eps;
            let mut xm = x0.clone();
            xm.data_mut()[e] -= eps;
            let fd = (eval(&xp) - eval(&xm)) / (2.0 * eps);
            let a = analytic.data()[e];
            let rel = (a - fd).abs() / f64::max(1e-8, a.abs() + fd.abs());
            worst = worst.max(rel);
        }
        worst
    }

    /// loss = sum of all entries, written as matmul with ones then pooling.
    fn sum_all(tape: &mut Tape, x: NodeId) -> NodeId {
        let cols = tape.value(x).cols();
        let rows = tape.value(x).rows();
        let ones = tape.leaf(DenseMatrix::from_vec(cols, 1, vec![1.0; cols]));
        let col = tape.matmul(x, ones); // rows×1
        let ones_row = tape.leaf(DenseMatrix::from_vec(1, rows, vec![1.0; rows]));
        tape.matmul(ones_row, col) // 1×1
    }

    #[test]
    fn matmul_gradient() {
        let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let err = fd_check(
            |tape, x| {
                let w = leaf(tape, &[vec![1.5, 0.5], vec![-0.7, 1.1]]);
                let y = tape.matmul(x, w);
                let y2 = tape.sigmoid(y);
                sum_all(tape, y2)
            },
            x0,
            2,
        );
        assert!(err < 1e-7, "matmul grad err {err}");
    }

    #[test]
    fn relu_and_bias_gradient() {
        let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let err = fd_check(
            |tape, x| {
                let b = leaf(tape, &[vec![0.3, -0.2]]);
                let y = tape.add_bias(x, b);
                let y = tape.relu(y);
                let y = tape.sigmoid(y);
                sum_all(tape, y)
            },
            x0,
            2,
        );
        assert!(err < 1e-7, "relu/bias grad err {err}");
    }

    #[test]
    fn masked_softmax_gradient() {
        let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let masks = Rc::new(vec![DenseMatrix::from_rows(&[
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ])]);
        let valid = Rc::new(vec![1.0, 1.0]);
        let err = fd_check(
            move |tape, x| {
                let p = tape.block_masked_softmax(x, masks.clone(), valid.clone());
                let w = leaf(tape, &[vec![1.0, 0.5], vec![-0.3, 0.8]]);
                let y = tape.matmul(p, w);
                let y = tape.sigmoid(y);
                sum_all(tape, y)
            },
            x0,
            2,
        );
        assert!(err < 1e-6, "softmax grad err {err}");
    }

    #[test]
    fn batch_norm_train_gradient() {
        let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![-0.5, 1.0]]);
        let valid = Rc::new(vec![1.0, 1.0, 1.0]);
        let err = fd_check(
            move |tape, x| {
                let s = leaf(tape, &[vec![1.2, 0.8]]);
                let t = leaf(tape, &[vec![0.1, -0.1]]);
                let y = tape.batch_norm_train(x, s, t, valid.clone(), 1e-5, 0);
                let y = tape.sigmoid(y);
                sum_all(tape, y)
            },
            x0,
            3,
        );
        assert!(err < 1e-6, "batch norm grad err {err}");
    }

    #[test]
    fn pool_and_bce_gradient() {
        let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let valid = Rc::new(vec![1.0, 1.0]);
        let labels = Rc::new(vec![1.0]);
        let err = fd_check(
            move |tape, x| {
                let pooled = tape.block_mean_pool(x, valid.clone()); // 1×2
                let w = leaf(tape, &[vec![0.7], vec![-0.4]]);
                let z = tape.matmul(pooled, w); // 1×1
                tape.bce_logits_mean(z, labels.clone())
            },
            x0,
            2,
        );
        assert!(err < 1e-7, "pool/bce grad err {err}");
    }

    #[test]
    fn attention_path_gradient() {
        // full per-head path: gram → masked softmax → attend
        let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![1.0, 0.25]]);
        let masks = Rc::new(vec![DenseMatrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        ])]);
        let valid = Rc::new(vec![1.0, 1.0]);
        let err = fd_check(
            move |tape, x| {
                let wq = leaf(tape, &[vec![0.5, -0.2], vec![0.1, 0.9]]);
                let wk = leaf(tape, &[vec![-0.4, 0.3], vec![0.8, 0.2]]);
                let wv = leaf(tape, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
                let q = tape.matmul(x, wq);
                let k = tape.matmul(x, wk);
                let v = tape.matmul(x, wv);
                let logits = tape.block_gram(q, k, 1.0);
                let probs = tape.block_masked_softmax(logits, masks.clone(), valid.clone());
                let out = tape.block_attend(probs, v);
                let out = tape.sigmoid(out);
                sum_all(tape, out)
            },
            x0,
            2,
        );
        assert!(err < 1e-6, "attention grad err {err}");
    }

    #[test]
    fn block_adj_matmul_matches_dense() {
        let adj = Rc::new(vec![DenseMatrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.0, 0.5, 0.5],
        ])]);
        let h = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let mut tape = Tape::new(3);
        let hid = tape.leaf(h.clone());
        let out = tape.block_adj_matmul(adj.clone(), hid);
        let expect = adj[0].matmul(&h);
        assert!(tape.value(out).max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn mask_rows_zeroes_grad() {
        let x0 = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let valid = Rc::new(vec![1.0, 0.0]);
        let mut tape = Tape::new(2);
        let x = tape.leaf(x0);
        let y = tape.mask_rows(x, valid.clone());
        let pooled = tape.block_mean_pool(y, Rc::new(vec![1.0, 1.0]));
        let w = tape.leaf(DenseMatrix::from_vec(2, 1, vec![1.0, 1.0]));
        let z = tape.matmul(pooled, w);
        let grads = tape.backward(z);
        let dx = grads.get(x).unwrap();
        assert_eq!(dx.row(1), &[0.0, 0.0]);
        assert!(dx.row(0).iter().all(|&v| v != 0.0));
    }
}

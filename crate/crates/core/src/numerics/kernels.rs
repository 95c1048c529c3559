//! Forward kernels shared by the public ops and the differentiation tape:
//! masked softmax, masked pooling, batch normalization, activations, loss.

use super::matrix::DenseMatrix;
use super::NumericsError;

/// Clamp bound applied to probabilities before the log in the cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise softmax restricted to the masked-in entries of each row.
///
/// Entry (i,j) of the result is exactly 0 where `mask[i][j] == 0`; the
/// remaining entries of each row sum to 1. Logits are shifted by the row
/// maximum over masked-in entries before exponentiation.
pub fn masked_row_softmax(
    logits: &DenseMatrix,
    mask: &DenseMatrix,
) -> Result<DenseMatrix, NumericsError> {
    if (logits.rows(), logits.cols()) != (mask.rows(), mask.cols()) {
        return Err(NumericsError::ShapeMismatch {
            context: "masked_row_softmax",
            expected: format!("{}x{}", logits.rows(), logits.cols()),
            got: format!("{}x{}", mask.rows(), mask.cols()),
        });
    }
    let mut out = DenseMatrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        if mask.row(i).iter().all(|&m| m == 0.0) {
            return Err(NumericsError::EmptyMaskRow { row: i });
        }
        masked_softmax_row(logits.row(i), mask.row(i), out.row_mut(i));
    }
    Ok(out)
}

/// Softmax of one row over its masked-in entries; masked-out entries get 0.
pub(crate) fn masked_softmax_row(logits: &[f64], mask: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (l, m) in logits.iter().zip(mask) {
        if *m != 0.0 && *l > max {
            max = *l;
        }
    }
    let mut denom = 0.0;
    for ((l, m), o) in logits.iter().zip(mask).zip(out.iter_mut()) {
        if *m != 0.0 {
            let e = (l - max).exp();
            *o = e;
            denom += e;
        } else {
            *o = 0.0;
        }
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
    // division leaves exact zeros untouched (0/denom = 0)
}

/// Mean over the rows `i` with `valid[i] != 0`. Padded rows contribute nothing.
pub fn masked_mean_pool(h: &DenseMatrix, valid: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if valid.len() != h.rows() {
        return Err(NumericsError::ShapeMismatch {
            context: "masked_mean_pool",
            expected: format!("{} validity entries", h.rows()),
            got: format!("{}", valid.len()),
        });
    }
    let count = valid.iter().filter(|&&v| v != 0.0).count();
    if count == 0 {
        return Err(NumericsError::NoValidRows);
    }
    let mut out = vec![0.0; h.cols()];
    for (i, &v) in valid.iter().enumerate() {
        if v != 0.0 {
            for (o, x) in out.iter_mut().zip(h.row(i)) {
                *o += x;
            }
        }
    }
    let inv = 1.0 / count as f64;
    for o in &mut out {
        *o *= inv;
    }
    Ok(out)
}

/// Binary cross entropy for one sample: −(y·ln p + (1−y)·ln(1−p)).
///
/// `p` is clamped to `[BCE_EPSILON, 1−BCE_EPSILON]` before the log.
pub fn bce_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// ln(1 + eˣ), stable across the whole range.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// The same cross entropy evaluated from the pre-sigmoid logit:
/// softplus(−z) for y = 1, softplus(z) for y = 0, clamped to the range the
/// probability clamp implies.
///
/// Identical to `bce_loss(sigmoid(z), y)` mathematically, but its absolute
/// floating-point error scales with the loss value instead of with ulp(1),
/// which is what makes central-difference gradient verification resolvable
/// for well-trained models.
pub fn bce_with_logits(z: f64, y: bool) -> f64 {
    let raw = if y { softplus(-z) } else { softplus(z) };
    raw.clamp(bce_loss_floor(), bce_loss_ceil())
}

/// Loss at a fully confident correct prediction under the clamp.
pub(crate) fn bce_loss_floor() -> f64 {
    -(1.0 - BCE_EPSILON).ln()
}

/// Loss at a fully confident wrong prediction under the clamp.
pub(crate) fn bce_loss_ceil() -> f64 {
    -BCE_EPSILON.ln()
}

/// Running-statistics state for one batch-normalization layer.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

/// Per-channel mean and biased (1/M) variance over the rows with
/// `valid[i] != 0`.
pub(crate) fn batch_stats(h: &DenseMatrix, valid: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    let count = valid.iter().filter(|&&v| v != 0.0).count();
    let inv = 1.0 / count as f64;
    let mut mean = vec![0.0; h.cols()];
    for (i, &v) in valid.iter().enumerate() {
        if v != 0.0 {
            for (m, x) in mean.iter_mut().zip(h.row(i)) {
                *m += x;
            }
        }
    }
    for m in &mut mean {
        *m *= inv;
    }
    let mut var = vec![0.0; h.cols()];
    for (i, &v) in valid.iter().enumerate() {
        if v != 0.0 {
            for ((vv, x), m) in var.iter_mut().zip(h.row(i)).zip(&mean) {
                let d = x - m;
                *vv += d * d;
            }
        }
    }
    for v in &mut var {
        *v *= inv;
    }
    (mean, var, count)
}

/// Batch normalization over all rows of `h`.
///
/// Training mode normalizes by in-batch statistics (biased variance) and
/// updates the running statistics with `state.momentum`; inference mode uses
/// the running statistics.
pub fn batch_norm(h: &DenseMatrix, state: &mut BatchNormState, training: bool) -> DenseMatrix {
    assert_eq!(h.cols(), state.channels(), "batch_norm channel mismatch");
    let valid = vec![1.0; h.rows()];
    if training {
        let (mean, var, _) = batch_stats(h, &valid);
        let out = bn_apply(h, &valid, &mean, &var, &state.scale, &state.shift, state.epsilon);
        let m = state.momentum;
        for c in 0..state.channels() {
            state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mean[c];
            state.running_var[c] = (1.0 - m) * state.running_var[c] + m * var[c];
        }
        out
    } else {
        bn_apply(
            h,
            &valid,
            &state.running_mean,
            &state.running_var,
            &state.scale,
            &state.shift,
            state.epsilon,
        )
    }
}

/// Normalize the valid rows of `h` by (mean, var), then scale and shift.
/// Rows with `valid[i] == 0` come out as exact zeros.
pub(crate) fn bn_apply(
    h: &DenseMatrix,
    valid: &[f64],
    mean: &[f64],
    var: &[f64],
    scale: &[f64],
    shift: &[f64],
    epsilon: f64,
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(h.rows(), h.cols());
    for (i, &v) in valid.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let row = h.row(i);
        let out_row = out.row_mut(i);
        for c in 0..row.len() {
            let xhat = (row[c] - mean[c]) / (var[c] + epsilon).sqrt();
            out_row[c] = xhat * scale[c] + shift[c];
        }
    }
    out
}

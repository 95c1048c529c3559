//! Named learnable tensors with an attached gradient buffer.

use super::matrix::DenseMatrix;

/// A learnable tensor plus its gradient accumulator.
///
/// The gradient always has the same shape as the value and is zeroed between
/// optimizer steps.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub gradient: DenseMatrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let gradient = DenseMatrix::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            gradient,
        }
    }

    pub fn zero_grad(&mut self) {
        self.gradient.fill(0.0);
    }

    /// Scalar count of this parameter.
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Zero the gradients of a parameter collection.
pub fn zero_grads(params: &mut [Parameter]) {
    for p in params {
        p.zero_grad();
    }
}

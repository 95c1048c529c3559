//! Bias-corrected adaptive-moment optimizer.

use crate::numerics::{DenseMatrix, Parameter};

use super::{Hyperparams, TrainError};

/// First/second moment buffers, one pair per parameter.
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    steps: usize,
}

impl AdamState {
    pub fn new(params: &[Parameter]) -> Self {
        AdamState {
            m: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
            v: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One update over `params[i].gradient`, in place. `step_index` is the
    /// 1-based global step used for bias correction; it must advance by one
    /// per call.
    pub fn step(
        &mut self,
        params: &mut [Parameter],
        hp: &Hyperparams,
        step_index: usize,
    ) -> Result<(), TrainError> {
        assert_eq!(step_index, self.steps + 1, "adam steps must be sequential");
        assert_eq!(params.len(), self.m.len());
        for (pi, p) in params.iter().enumerate() {
            if !p.gradient.is_finite() {
                return Err(TrainError::NonFiniteGradient {
                    param: p.name.clone(),
                    step: step_index,
                });
            }
            let _ = pi;
        }
        self.steps = step_index;
        let b1 = hp.adam_beta1;
        let b2 = hp.adam_beta2;
        let bc1 = 1.0 - b1.powi(step_index as i32);
        let bc2 = 1.0 - b2.powi(step_index as i32);
        for (pi, p) in params.iter_mut().enumerate() {
            let m = self.m[pi].data_mut();
            let v = self.v[pi].data_mut();
            let grad = p.gradient.data();
            let value = p.value.data_mut();
            for e in 0..grad.len() {
                let g = grad[e];
                m[e] = b1 * m[e] + (1.0 - b1) * g;
                v[e] = b2 * v[e] + (1.0 - b2) * g * g;
                let m_hat = m[e] / bc1;
                let v_hat = v[e] / bc2;
                value[e] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.adam_epsilon);
            }
        }
        Ok(())
    }
}

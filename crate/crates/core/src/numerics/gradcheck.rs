//! Central-difference verification of reverse-mode gradients.

use super::param::Parameter;
use super::NumericsError;

/// Default perturbation for [`grad_check`].
pub const DEFAULT_EPS: f64 = 1e-5;

/// Relative error between an analytic and a finite-difference gradient entry:
/// |g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|).
pub fn relative_error(analytic: f64, finite_diff: f64) -> f64 {
    (analytic - finite_diff).abs() / f64::max(1e-8, analytic.abs() + finite_diff.abs())
}

/// Worst entry found by a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_entry: usize,
}

/// Compare the analytic gradients stored in `params[i].gradient` against
/// central differences of `f` at the current parameter values.
///
/// For every parameter entry the finite difference is
/// (f(θ+eps) − f(θ−eps)) / (2·eps); the returned report carries the maximum
/// relative error over all entries. The caller must have filled the gradient
/// buffers (one reverse pass) before calling.
pub fn grad_check<F>(
    mut f: F,
    params: &mut [Parameter],
    eps: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&[Parameter]) -> f64,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_entry: 0,
    };
    for pi in 0..params.len() {
        for e in 0..params[pi].len() {
            let analytic = params[pi].gradient.data()[e];
            let original = params[pi].value.data()[e];
            params[pi].value.data_mut()[e] = original + eps;
            let f_plus = f(params);
            params[pi].value.data_mut()[e] = original - eps;
            let f_minus = f(params);
            params[pi].value.data_mut()[e] = original;
            if !f_plus.is_finite() || !f_minus.is_finite() || !analytic.is_finite() {
                return Err(NumericsError::NonFinite {
                    context: "grad_check",
                });
            }
            let fd = (f_plus - f_minus) / (2.0 * eps);
            let rel = relative_error(analytic, fd);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = params[pi].name.clone();
                report.worst_entry = e;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::DenseMatrix;

    #[test]
    fn quadratic_gradient_matches() {
        // f(w) = w² at w=3, analytic gradient 6
        let mut p = Parameter::new("w", DenseMatrix::scalar(3.0));
        p.gradient = DenseMatrix::scalar(6.0);
        let mut params = vec![p];
        let report = grad_check(
            |ps: &[Parameter]| {
                let w = ps[0].value.get(0, 0);
                w * w
            },
            &mut params,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-10, "err {}", report.max_rel_error);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut p = Parameter::new("w", DenseMatrix::scalar(3.0));
        p.gradient = DenseMatrix::scalar(5.0); // wrong on purpose
        let mut params = vec![p];
        let report = grad_check(
            |ps: &[Parameter]| {
                let w = ps[0].value.get(0, 0);
                w * w
            },
            &mut params,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_rel_error > 1e-2);
        assert_eq!(report.worst_param, "w");
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut p = Parameter::new("w", DenseMatrix::scalar(0.0));
        let mut params = vec![p.clone()];
        p.gradient = DenseMatrix::scalar(0.0);
        let r = grad_check(|_| f64::NAN, &mut params, DEFAULT_EPS);
        assert!(matches!(r, Err(NumericsError::NonFinite { .. })));
    }
}

//! ROC sweep over score thresholds.
//!
//! Scores are P(false trigger); a sample is accepted iff its score is below
//! the threshold. TPR is the fraction of true triggers accepted, FAR the
//! fraction of false triggers accepted. Thresholds run over the midpoints
//! between distinct scores plus an accept-none and an accept-all sentinel,
//! so every achievable operating point appears exactly once.

use super::MetricError;

/// One swept operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub far: f64,
}

/// Operating points in sweep order (TPR and FAR non-decreasing) plus the
/// trapezoidal area under the TPR-vs-FAR curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// CSV rendering: `threshold,tpr,far`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,far\n");
        for p in &self.points {
            out.push_str(&format!("{:.9},{:.9},{:.9}\n", p.threshold, p.tpr, p.far));
        }
        out
    }
}

/// Sweep the ROC curve. `is_true_trigger[i]` labels sample `i`; both classes
/// must be present and all scores finite.
pub fn roc_curve(scores: &[f64], is_true_trigger: &[bool]) -> Result<RocCurve, MetricError> {
    assert_eq!(scores.len(), is_true_trigger.len());
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore);
    }
    let num_true = is_true_trigger.iter().filter(|&&t| t).count();
    let num_false = scores.len() - num_true;
    if num_true == 0 || num_false == 0 {
        return Err(MetricError::SingleClass);
    }

    // group samples by distinct score, ascending
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut groups: Vec<(f64, usize, usize)> = Vec::new(); // (score, true count, false count)
    for &i in &order {
        match groups.last_mut() {
            Some((s, t, f)) if *s == scores[i] => {
                if is_true_trigger[i] {
                    *t += 1;
                } else {
                    *f += 1;
                }
            }
            _ => {
                let (t, f) = if is_true_trigger[i] { (1, 0) } else { (0, 1) };
                groups.push((scores[i], t, f));
            }
        }
    }

    // thresholds: below everything, between each distinct pair, above everything
    let mut thresholds = Vec::with_capacity(groups.len() + 1);
    thresholds.push(groups[0].0); // accept-none sentinel (acceptance is strict <)
    for pair in groups.windows(2) {
        thresholds.push(0.5 * (pair[0].0 + pair[1].0));
    }
    thresholds.push(f64::INFINITY); // accept-all sentinel

    let mut points = Vec::with_capacity(thresholds.len());
    let mut acc_true = 0usize;
    let mut acc_false = 0usize;
    let mut group_iter = groups.iter().peekable();
    for theta in thresholds {
        while let Some((s, t, f)) = group_iter.peek() {
            if *s < theta {
                acc_true += t;
                acc_false += f;
                group_iter.next();
            } else {
                break;
            }
        }
        points.push(RocPoint {
            threshold: theta,
            tpr: acc_true as f64 / num_true as f64,
            far: acc_false as f64 / num_false as f64,
        });
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].far - pair[0].far) * 0.5 * (pair[0].tpr + pair[1].tpr);
    }
    Ok(RocCurve { points, auc })
}

/// Minimum FAR among operating points with TPR ≥ `target_tpr`. The accept-all
/// sentinel guarantees such a point exists for any target ≤ 1.
pub fn far_at_tpr(curve: &RocCurve, target_tpr: f64) -> f64 {
    assert!(target_tpr > 0.0 && target_tpr <= 1.0, "target out of range");
    curve
        .points
        .iter()
        .filter(|p| p.tpr >= target_tpr)
        .map(|p| p.far)
        .fold(f64::INFINITY, f64::min)
}

//! Zero-padded mini-batches of variable-size graphs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::lattice::{GraphSample, Label};
use crate::numerics::DenseMatrix;

/// A stack of graph samples padded to the largest arc count in the batch.
///
/// Adjacency rows/columns and feature rows beyond each sample's real arc
/// count are exactly zero; `validity[b]` is 1.0 on the first `N_b` positions
/// and 0.0 on the padding.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub nmax: usize,
    /// Per-sample Nmax×Nmax row-stochastic adjacency (zero on padding).
    pub adjacency: Vec<DenseMatrix>,
    /// Per-sample Nmax×20 feature matrix (zero rows on padding).
    pub features: Vec<DenseMatrix>,
    /// Per-sample validity vector of length Nmax.
    pub validity: Vec<Vec<f64>>,
    /// 1.0 = false trigger (the positive class), 0.0 = true trigger.
    pub labels: Vec<Option<f64>>,
    pub utterance_ids: Vec<String>,
}

impl GraphBatch {
    /// Pad the given samples to a common size. `pad_to` must be at least the
    /// largest arc count; passing a larger value appends extra padding.
    pub fn from_samples(samples: &[&GraphSample], pad_to: Option<usize>) -> GraphBatch {
        assert!(!samples.is_empty(), "batch must be non-empty");
        let widest = samples.iter().map(|s| s.num_arcs()).max().unwrap();
        let nmax = pad_to.map(|p| p.max(widest)).unwrap_or(widest);
        let mut adjacency = Vec::with_capacity(samples.len());
        let mut features = Vec::with_capacity(samples.len());
        let mut validity = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        let mut utterance_ids = Vec::with_capacity(samples.len());
        for s in samples {
            let n = s.num_arcs();
            let mut adj = DenseMatrix::zeros(nmax, nmax);
            for i in 0..n {
                adj.row_mut(i)[..n].copy_from_slice(s.adjacency.row(i));
            }
            let mut feat = DenseMatrix::zeros(nmax, s.features.cols());
            for i in 0..n {
                feat.row_mut(i).copy_from_slice(s.features.row(i));
            }
            let mut valid = vec![0.0; nmax];
            valid[..n].fill(1.0);
            adjacency.push(adj);
            features.push(feat);
            validity.push(valid);
            labels.push(match s.label {
                Label::FalseTrigger => Some(1.0),
                Label::TrueTrigger => Some(0.0),
                Label::Unlabeled => None,
            });
            utterance_ids.push(s.utterance_id.clone());
        }
        GraphBatch {
            nmax,
            adjacency,
            features,
            validity,
            labels,
            utterance_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Labels as a dense vector; `None` if any sample is unlabeled.
    pub fn label_vector(&self) -> Option<Vec<f64>> {
        self.labels.iter().copied().collect()
    }

    /// All samples' features stacked into one (B·Nmax)×D matrix.
    pub fn stacked_features(&self) -> DenseMatrix {
        let cols = self.features[0].cols();
        let mut out = DenseMatrix::zeros(self.len() * self.nmax, cols);
        for (b, f) in self.features.iter().enumerate() {
            for i in 0..self.nmax {
                out.row_mut(b * self.nmax + i).copy_from_slice(f.row(i));
            }
        }
        out
    }

    /// All samples' validity vectors concatenated.
    pub fn stacked_validity(&self) -> Vec<f64> {
        self.validity.iter().flatten().copied().collect()
    }
}

/// Deterministically shuffle the samples, then cut them into zero-padded
/// batches. The final short batch is kept.
pub fn make_batches(samples: &[GraphSample], batch_size: usize, seed: u64) -> Vec<GraphBatch> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    batches_in_order(samples, batch_size, &order)
}

/// Batches in corpus order (no shuffle) — used for evaluation and scoring.
pub fn make_batches_in_order(samples: &[GraphSample], batch_size: usize) -> Vec<GraphBatch> {
    assert!(batch_size >= 1);
    let order: Vec<usize> = (0..samples.len()).collect();
    batches_in_order(samples, batch_size, &order)
}

fn batches_in_order(
    samples: &[GraphSample],
    batch_size: usize,
    order: &[usize],
) -> Vec<GraphBatch> {
    assert!(!samples.is_empty(), "cannot batch an empty sample list");
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&GraphSample> = chunk.iter().map(|&i| &samples[i]).collect();
            GraphBatch::from_samples(&refs, None)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, label: Label, id: &str) -> GraphSample {
        // simple chain lattice of n arcs
        let mut adjacency = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let mut degree = 1usize;
            if i > 0 {
                degree += 1;
            }
            if i + 1 < n {
                degree += 1;
            }
            let w = 1.0 / degree as f64;
            adjacency.set(i, i, w);
            if i > 0 {
                adjacency.set(i, i - 1, w);
            }
            if i + 1 < n {
                adjacency.set(i, i + 1, w);
            }
        }
        let mut features = DenseMatrix::zeros(n, 20);
        for i in 0..n {
            features.set(i, 0, i as f64 + 1.0);
        }
        GraphSample {
            adjacency,
            features,
            label,
            utterance_id: id.into(),
        }
    }

    #[test]
    fn batch_sizes_and_nmax_in_order() {
        let samples = vec![
            sample(2, Label::TrueTrigger, "a"),
            sample(3, Label::FalseTrigger, "b"),
            sample(5, Label::TrueTrigger, "c"),
        ];
        let batches = make_batches_in_order(&samples, 2);
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].nmax, 3);
        assert_eq!(batches[1].nmax, 5);
        assert_eq!(batches[0].len(), 2);
        assert_eq!(batches[1].len(), 1);
    }

    #[test]
    fn padding_is_exactly_zero() {
        let samples = vec![
            sample(2, Label::TrueTrigger, "a"),
            sample(4, Label::FalseTrigger, "b"),
        ];
        let batches = make_batches_in_order(&samples, 2);
        let b = &batches[0];
        assert_eq!(b.nmax, 4);
        // sample 0 has 2 real arcs; rows/cols 2..4 must be all zero
        for i in 0..4 {
            for j in 0..4 {
                if i >= 2 || j >= 2 {
                    assert_eq!(b.adjacency[0].get(i, j), 0.0);
                }
            }
        }
        for i in 2..4 {
            assert!(b.features[0].row(i).iter().all(|&v| v == 0.0));
        }
        assert_eq!(b.validity[0], vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_composition() {
        let samples: Vec<GraphSample> = (0..10)
            .map(|i| sample(2 + i % 4, Label::TrueTrigger, &format!("u{i}")))
            .collect();
        let a = make_batches(&samples, 3, 42);
        let b = make_batches(&samples, 3, 42);
        let ids = |bs: &[GraphBatch]| -> Vec<String> {
            bs.iter().flat_map(|x| x.utterance_ids.clone()).collect()
        };
        assert_eq!(ids(&a), ids(&b));
        let c = make_batches(&samples, 3, 43);
        assert_ne!(ids(&a), ids(&c));
    }
}

//! Arc-adjacency ("line graph") representation of a lattice.

use crate::numerics::DenseMatrix;

use super::{Label, Lattice, FEATURE_DIM};

/// A lattice converted to dense matrices: a row-stochastic N×N adjacency
/// matrix over arcs and the N×20 arc-feature matrix, in arc order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub adjacency: DenseMatrix,
    pub features: DenseMatrix,
    pub label: Label,
    pub utterance_id: String,
}

impl GraphSample {
    pub fn num_arcs(&self) -> usize {
        self.adjacency.rows()
    }
}

/// Build the arc-adjacency graph: arcs i and j (i≠j) are connected iff one's
/// end state is the other's start state, every arc is adjacent to itself,
/// and row i holds 1/degree(i) at each connected column.
///
/// The nonzero pattern is symmetric; the values are not, because each row is
/// normalized by its own degree.
pub fn build_line_graph(lattice: &Lattice) -> GraphSample {
    let n = lattice.num_arcs();
    let mut connected = vec![false; n * n];
    for i in 0..n {
        connected[i * n + i] = true;
        for j in (i + 1)..n {
            let a = &lattice.arcs[i];
            let b = &lattice.arcs[j];
            if a.end_state == b.start_state || b.end_state == a.start_state {
                connected[i * n + j] = true;
                connected[j * n + i] = true;
            }
        }
    }
    let mut adjacency = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let degree = (0..n).filter(|&j| connected[i * n + j]).count();
        let w = 1.0 / degree as f64;
        for j in 0..n {
            if connected[i * n + j] {
                adjacency.set(i, j, w);
            }
        }
    }
    let mut features = DenseMatrix::zeros(n, FEATURE_DIM);
    for (i, arc) in lattice.arcs.iter().enumerate() {
        features.row_mut(i).copy_from_slice(&arc.features.flatten());
    }
    GraphSample {
        adjacency,
        features,
        label: lattice.label,
        utterance_id: lattice.utterance_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Arc, ArcFeatures};

    pub(crate) fn test_arc(start: usize, end: usize, word: &str) -> Arc {
        Arc {
            start_state: start,
            end_state: end,
            word: word.into(),
            features: ArcFeatures {
                phone_embedding: [0.1; 14],
                am_score: -3.0,
                lm_score: -1.0,
                log_posterior: -0.2,
                num_frames: 10,
                trigger_flag_1: false,
                trigger_flag_2: false,
            },
        }
    }

    fn lattice(num_states: usize, arcs: Vec<Arc>) -> Lattice {
        Lattice {
            utterance_id: "t".into(),
            label: Label::TrueTrigger,
            num_states,
            arcs,
        }
    }

    #[test]
    fn chain_adjacency() {
        let lat = lattice(
            4,
            vec![test_arc(0, 1, "a"), test_arc(1, 2, "b"), test_arc(2, 3, "c")],
        );
        let g = build_line_graph(&lat);
        let expect = DenseMatrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.0, 0.5, 0.5],
        ]);
        assert!(g.adjacency.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn single_arc_is_self_adjacent() {
        let lat = lattice(2, vec![test_arc(0, 1, "a")]);
        let g = build_line_graph(&lat);
        assert_eq!(g.adjacency, DenseMatrix::from_rows(&[vec![1.0]]));
    }

    #[test]
    fn diamond_parallel_arcs_not_adjacent() {
        // s0→s1 ; two parallel arcs s1→s2 ; s2→s3
        let lat = lattice(
            4,
            vec![
                test_arc(0, 1, "a1"),
                test_arc(1, 2, "a2"),
                test_arc(1, 2, "a3"),
                test_arc(2, 3, "a4"),
            ],
        );
        let g = build_line_graph(&lat);
        // brute-force connectivity oracle over all arc pairs
        for i in 0..4 {
            for j in 0..4 {
                let ai = &lat.arcs[i];
                let aj = &lat.arcs[j];
                let connected = i == j
                    || ai.end_state == aj.start_state
                    || aj.end_state == ai.start_state;
                assert_eq!(g.adjacency.get(i, j) > 0.0, connected, "pair ({i},{j})");
            }
        }
        // all four degrees are 3
        for i in 0..4 {
            let nonzero = (0..4).filter(|&j| g.adjacency.get(i, j) > 0.0).count();
            assert_eq!(nonzero, 3);
            for j in 0..4 {
                let v = g.adjacency.get(i, j);
                assert!(v == 0.0 || (v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        // the two parallel arcs are not adjacent
        assert_eq!(g.adjacency.get(1, 2), 0.0);
        assert_eq!(g.adjacency.get(2, 1), 0.0);
    }

    #[test]
    fn rows_sum_to_one_pattern_symmetric_diagonal_positive() {
        let lat = lattice(
            5,
            vec![
                test_arc(0, 1, "a"),
                test_arc(0, 2, "b"),
                test_arc(1, 3, "c"),
                test_arc(2, 3, "d"),
                test_arc(3, 4, "e"),
            ],
        );
        let g = build_line_graph(&lat);
        let n = g.num_arcs();
        for i in 0..n {
            let sum: f64 = g.adjacency.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(g.adjacency.get(i, i) > 0.0);
            for j in 0..n {
                assert_eq!(
                    g.adjacency.get(i, j) > 0.0,
                    g.adjacency.get(j, i) > 0.0,
                    "pattern symmetry at ({i},{j})"
                );
            }
        }
    }
}

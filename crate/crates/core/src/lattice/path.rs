//! 1-best path extraction and trigger-phrase matching.

use std::collections::HashMap;

use super::{Lattice, LatticeError};

/// Word sequence of the best-scoring complete path.
///
/// Paths start at state 0 and end at any state with no outgoing arcs; the
/// score of a path is Σ (am_weight·am_score + lm_weight·lm_score) over its
/// arcs. Ties are broken toward the lexicographically smallest word sequence.
pub fn best_path(
    lattice: &Lattice,
    am_weight: f64,
    lm_weight: f64,
) -> Result<Vec<String>, LatticeError> {
    let mut out_arcs: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, arc) in lattice.arcs.iter().enumerate() {
        out_arcs.entry(arc.start_state).or_default().push(i);
    }
    if !out_arcs.contains_key(&0) {
        return Err(LatticeError::NoCompletePath {
            utterance_id: lattice.utterance_id.clone(),
        });
    }

    // best (score, words) from each state to a final state, memoized;
    // the state graph is a DAG so plain recursion terminates
    fn solve(
        state: usize,
        lattice: &Lattice,
        out_arcs: &HashMap<usize, Vec<usize>>,
        am_weight: f64,
        lm_weight: f64,
        memo: &mut HashMap<usize, (f64, Vec<String>)>,
    ) -> (f64, Vec<String>) {
        if let Some(hit) = memo.get(&state) {
            return hit.clone();
        }
        let best = match out_arcs.get(&state) {
            None => (0.0, Vec::new()), // final state
            Some(arcs) => {
                let mut best: Option<(f64, Vec<String>)> = None;
                for &i in arcs {
                    let arc = &lattice.arcs[i];
                    let (tail_score, tail_words) = solve(
                        arc.end_state,
                        lattice,
                        out_arcs,
                        am_weight,
                        lm_weight,
                        memo,
                    );
                    let score = am_weight * arc.features.am_score
                        + lm_weight * arc.features.lm_score
                        + tail_score;
                    let mut words = Vec::with_capacity(tail_words.len() + 1);
                    words.push(arc.word.clone());
                    words.extend(tail_words);
                    let better = match &best {
                        None => true,
                        Some((bs, bw)) => score > *bs || (score == *bs && words < *bw),
                    };
                    if better {
                        best = Some((score, words));
                    }
                }
                best.expect("state has outgoing arcs")
            }
        };
        memo.insert(state, best.clone());
        best
    }

    let mut memo = HashMap::new();
    let (_, words) = solve(0, lattice, &out_arcs, am_weight, lm_weight, &mut memo);
    Ok(words)
}

/// True iff `trigger_phrase` occurs as a contiguous, case-insensitive
/// subsequence of `words`.
pub fn contains_trigger<W: AsRef<str>, T: AsRef<str>>(words: &[W], trigger_phrase: &[T]) -> bool {
    assert!(!trigger_phrase.is_empty(), "trigger phrase must be non-empty");
    if trigger_phrase.len() > words.len() {
        return false;
    }
    let lower: Vec<String> = words.iter().map(|w| w.as_ref().to_lowercase()).collect();
    let phrase: Vec<String> = trigger_phrase
        .iter()
        .map(|w| w.as_ref().to_lowercase())
        .collect();
    lower.windows(phrase.len()).any(|win| win == phrase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Arc, ArcFeatures, Label};

    fn arc(start: usize, end: usize, word: &str, am: f64, lm: f64) -> Arc {
        Arc {
            start_state: start,
            end_state: end,
            word: word.into(),
            features: ArcFeatures {
                phone_embedding: [0.0; 14],
                am_score: am,
                lm_score: lm,
                log_posterior: -0.1,
                num_frames: 5,
                trigger_flag_1: false,
                trigger_flag_2: false,
            },
        }
    }

    fn lattice(num_states: usize, arcs: Vec<Arc>) -> Lattice {
        Lattice {
            utterance_id: "t".into(),
            label: Label::Unlabeled,
            num_states,
            arcs,
        }
    }

    #[test]
    fn single_path() {
        let lat = lattice(
            3,
            vec![arc(0, 1, "hi", -1.0, -0.5), arc(1, 2, "dan", -2.0, -0.25)],
        );
        assert_eq!(best_path(&lat, 1.0, 1.0).unwrap(), vec!["hi", "dan"]);
    }

    #[test]
    fn strict_dominance() {
        let lat = lattice(
            2,
            vec![arc(0, 1, "good", -0.5, -0.5), arc(0, 1, "bad", -1.0, -1.0)],
        );
        assert_eq!(best_path(&lat, 1.0, 1.0).unwrap(), vec!["good"]);
    }

    #[test]
    fn tie_breaks_lexicographically() {
        // two equal-score paths "hi dan" vs "hi don"
        let lat = lattice(
            3,
            vec![
                arc(0, 1, "hi", -1.0, 0.0),
                arc(1, 2, "don", -0.5, -0.5),
                arc(1, 2, "dan", -0.5, -0.5),
            ],
        );
        assert_eq!(best_path(&lat, 1.0, 1.0).unwrap(), vec!["hi", "dan"]);
    }

    #[test]
    fn weights_change_the_winner() {
        let lat = lattice(
            2,
            vec![arc(0, 1, "amfav", -1.0, -5.0), arc(0, 1, "lmfav", -5.0, -1.0)],
        );
        assert_eq!(best_path(&lat, 1.0, 0.0).unwrap(), vec!["amfav"]);
        assert_eq!(best_path(&lat, 0.0, 1.0).unwrap(), vec!["lmfav"]);
    }

    #[test]
    fn disconnected_start_is_an_error() {
        // arcs exist but none leave state 0
        let lat = lattice(3, vec![arc(1, 2, "x", -1.0, -1.0)]);
        assert!(matches!(
            best_path(&lat, 1.0, 1.0),
            Err(LatticeError::NoCompletePath { .. })
        ));
    }

    #[test]
    fn exhaustive_enumeration_agrees() {
        // small branching lattice; compare against full path enumeration
        let lat = lattice(
            4,
            vec![
                arc(0, 1, "a", -1.0, -0.2),
                arc(0, 2, "b", -0.4, -0.9),
                arc(1, 3, "c", -0.3, -0.3),
                arc(2, 3, "d", -0.8, -0.1),
                arc(1, 2, "e", -0.05, -0.05),
            ],
        );
        let (aw, lw) = (0.7, 1.3);
        // enumerate all complete paths by DFS
        fn dfs(
            state: usize,
            lat: &Lattice,
            aw: f64,
            lw: f64,
            score: f64,
            words: &mut Vec<String>,
            acc: &mut Vec<(f64, Vec<String>)>,
        ) {
            let outgoing: Vec<_> = lat
                .arcs
                .iter()
                .filter(|a| a.start_state == state)
                .collect();
            if outgoing.is_empty() {
                acc.push((score, words.clone()));
                return;
            }
            for a in outgoing {
                words.push(a.word.clone());
                dfs(
                    a.end_state,
                    lat,
                    aw,
                    lw,
                    score + aw * a.features.am_score + lw * a.features.lm_score,
                    words,
                    acc,
                );
                words.pop();
            }
        }
        let mut acc = Vec::new();
        dfs(0, &lat, aw, lw, 0.0, &mut Vec::new(), &mut acc);
        acc.sort_by(|(s1, w1), (s2, w2)| {
            s2.partial_cmp(s1).unwrap().then_with(|| w1.cmp(w2))
        });
        assert_eq!(best_path(&lat, aw, lw).unwrap(), acc[0].1);
    }

    #[test]
    fn trigger_matching() {
        let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        assert!(contains_trigger(
            &words("hi dan what time"),
            &words("hi dan")
        ));
        assert!(!contains_trigger(
            &words("hey don lets grab lunch"),
            &words("hi dan")
        ));
        assert!(!contains_trigger(&words("dan hi"), &words("hi dan")));
        assert!(contains_trigger(&words("oh HI Dan please"), &words("hi dan")));
        assert!(!contains_trigger(&words("hi"), &words("hi dan")));
    }
}

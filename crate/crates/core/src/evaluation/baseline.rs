//! The non-tunable 1-best baseline: accept iff the top hypothesis contains
//! the trigger phrase.

use crate::lattice::{best_path, contains_trigger, Label, Lattice};

use super::MetricError;

/// Evaluate the ASR-output baseline over labeled lattices. Returns the single
/// (TPR, FAR) operating point.
pub fn asr_output_baseline(
    lattices: &[Lattice],
    trigger_phrase: &[String],
    am_weight: f64,
    lm_weight: f64,
) -> Result<(f64, f64), MetricError> {
    let mut accepted_true = 0usize;
    let mut accepted_false = 0usize;
    let mut num_true = 0usize;
    let mut num_false = 0usize;
    for lat in lattices {
        let is_true = match lat.label {
            Label::TrueTrigger => true,
            Label::FalseTrigger => false,
            Label::Unlabeled => return Err(MetricError::UnlabeledInput),
        };
        let words = best_path(lat, am_weight, lm_weight)
            .map_err(|e| MetricError::Structural(e.to_string()))?;
        let accept = contains_trigger(&words, trigger_phrase);
        if is_true {
            num_true += 1;
            if accept {
                accepted_true += 1;
            }
        } else {
            num_false += 1;
            if accept {
                accepted_false += 1;
            }
        }
    }
    if num_true == 0 || num_false == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok((
        accepted_true as f64 / num_true as f64,
        accepted_false as f64 / num_false as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Arc, ArcFeatures};

    fn word_arc(start: usize, end: usize, word: &str, am: f64) -> Arc {
        Arc {
            start_state: start,
            end_state: end,
            word: word.into(),
            features: ArcFeatures {
                phone_embedding: [0.0; 14],
                am_score: am,
                lm_score: -1.0,
                log_posterior: -0.1,
                num_frames: 5,
                trigger_flag_1: false,
                trigger_flag_2: false,
            },
        }
    }

    fn two_word_lattice(id: &str, label: Label, w1: &str, w2: &str) -> Lattice {
        Lattice {
            utterance_id: id.into(),
            label,
            num_states: 3,
            arcs: vec![word_arc(0, 1, w1, -1.0), word_arc(1, 2, w2, -1.0)],
        }
    }

    #[test]
    fn all_contain_phrase() {
        let lats = vec![
            two_word_lattice("t1", Label::TrueTrigger, "hi", "dan"),
            two_word_lattice("f1", Label::FalseTrigger, "hi", "dan"),
        ];
        let phrase = vec!["hi".to_string(), "dan".to_string()];
        assert_eq!(asr_output_baseline(&lats, &phrase, 1.0, 1.0).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn none_contain_phrase() {
        let lats = vec![
            two_word_lattice("t1", Label::TrueTrigger, "hey", "don"),
            two_word_lattice("f1", Label::FalseTrigger, "grab", "lunch"),
        ];
        let phrase = vec!["hi".to_string(), "dan".to_string()];
        assert_eq!(asr_output_baseline(&lats, &phrase, 1.0, 1.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn single_class_rejected() {
        let lats = vec![two_word_lattice("t1", Label::TrueTrigger, "hi", "dan")];
        let phrase = vec!["hi".to_string(), "dan".to_string()];
        assert!(matches!(
            asr_output_baseline(&lats, &phrase, 1.0, 1.0),
            Err(MetricError::SingleClass)
        ));
    }
}

//! Labeled synthetic lattice corpora.
//!
//! True-trigger lattices are near-linear chains with tight score noise;
//! false-trigger lattices sprout competing arcs and parallel sub-paths and
//! carry wider score noise, so lattice *structure* separates the classes.
//! Most false lattices still carry the trigger words and flags (the trigger
//! detector fired before the lattice existed), which keeps the flags from
//! being a shortcut feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::lattice::{canon9, Arc, ArcFeatures, Label, Lattice, PHONE_EMBEDDING_DIM};

/// The two-word trigger phrase planted in generated lattices.
pub const TRIGGER_PHRASE: [&str; 2] = ["hi", "dan"];

/// Generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_true: usize,
    pub num_false: usize,
    /// Backbone path length in words, inclusive bounds.
    pub path_length_min: usize,
    pub path_length_max: usize,
    /// Probability an interior state sprouts a competing arc.
    pub branch_prob_true: f64,
    pub branch_prob_false: f64,
    /// Extra parallel sub-paths per false lattice, inclusive bounds.
    pub false_extra_paths_min: usize,
    pub false_extra_paths_max: usize,
    pub score_noise_sigma_true: f64,
    pub score_noise_sigma_false: f64,
    /// Probability a false lattice still carries the trigger words + flags.
    pub trigger_flag_noise: f64,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_true: 100,
            num_false: 100,
            path_length_min: 4,
            path_length_max: 10,
            branch_prob_true: 0.05,
            branch_prob_false: 0.6,
            false_extra_paths_min: 1,
            false_extra_paths_max: 4,
            score_noise_sigma_true: 0.2,
            score_noise_sigma_false: 1.0,
            trigger_flag_noise: 0.7,
            vocab_size: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |v: f64, name: &str| -> Result<(), SynthError> {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::Invalid(format!("{name} must be in [0,1]")));
            }
            Ok(())
        };
        prob(self.branch_prob_true, "branch_prob_true")?;
        prob(self.branch_prob_false, "branch_prob_false")?;
        prob(self.trigger_flag_noise, "trigger_flag_noise")?;
        if self.num_true < 1 || self.num_false < 1 {
            return Err(SynthError::Invalid("counts must be >= 1".into()));
        }
        if self.path_length_min < 2 || self.path_length_min > self.path_length_max {
            return Err(SynthError::Invalid(
                "path length range must be non-empty with min >= 2".into(),
            ));
        }
        if self.false_extra_paths_min > self.false_extra_paths_max {
            return Err(SynthError::Invalid("extra-path range must be non-empty".into()));
        }
        if self.vocab_size < 3 {
            return Err(SynthError::Invalid(
                "vocab_size must leave room for the trigger words".into(),
            ));
        }
        if self.score_noise_sigma_true <= 0.0 || self.score_noise_sigma_false <= 0.0 {
            return Err(SynthError::Invalid("score noise sigmas must be positive".into()));
        }
        Ok(())
    }

    fn branch_prob(&self, label: Label) -> f64 {
        match label {
            Label::FalseTrigger => self.branch_prob_false,
            _ => self.branch_prob_true,
        }
    }

    fn score_sigma(&self, label: Label) -> f64 {
        match label {
            Label::FalseTrigger => self.score_noise_sigma_false,
            _ => self.score_noise_sigma_true,
        }
    }
}

/// Generate one lattice. The backbone is a single complete path; false
/// lattices add competing arcs and detours on top of it. Always a valid DAG.
pub fn gen_lattice(spec: &SynthSpec, label: Label, rng: &mut ChaCha20Rng) -> Lattice {
    let backbone_len = rng.random_range(spec.path_length_min..=spec.path_length_max);
    let sigma = spec.score_sigma(label);
    let is_false = label == Label::FalseTrigger;
    let plant_trigger = !is_false || rng.random::<f64>() < spec.trigger_flag_noise;

    let mut arcs: Vec<Arc> = Vec::new();
    // backbone: states 0..=backbone_len in a chain
    for s in 0..backbone_len {
        let (word, flag1, flag2) = if plant_trigger && s < 2 {
            (TRIGGER_PHRASE[s].to_string(), s == 0, s == 1)
        } else {
            (filler_word(spec, rng), false, false)
        };
        arcs.push(make_arc(s, s + 1, word, flag1, flag2, label, sigma, rng));
    }
    // competing arcs from interior states
    let branch_prob = spec.branch_prob(label);
    for s in 1..backbone_len {
        if rng.random::<f64>() < branch_prob {
            let word = filler_word(spec, rng);
            arcs.push(make_arc(s, s + 1, word, false, false, label, sigma, rng));
        }
    }
    // parallel sub-paths (false lattices only)
    let mut num_states = backbone_len + 1;
    if is_false {
        let extra = rng.random_range(spec.false_extra_paths_min..=spec.false_extra_paths_max);
        for _ in 0..extra {
            if backbone_len < 2 {
                break;
            }
            let start = rng.random_range(0..=backbone_len - 2);
            let span = rng.random_range(2..=(backbone_len - start).min(3));
            let mut prev = start;
            for k in 0..span {
                let next = if k + 1 == span {
                    start + span
                } else {
                    let s = num_states;
                    num_states += 1;
                    s
                };
                let word = filler_word(spec, rng);
                arcs.push(make_arc(prev, next, word, false, false, label, sigma, rng));
                prev = next;
            }
        }
    }

    Lattice {
        utterance_id: String::new(), // assigned by gen_corpus
        label,
        num_states,
        arcs,
    }
}

#[allow(clippy::too_many_arguments)]
fn make_arc(
    start: usize,
    end: usize,
    word: String,
    flag1: bool,
    flag2: bool,
    label: Label,
    sigma: f64,
    rng: &mut ChaCha20Rng,
) -> Arc {
    let normal = |rng: &mut ChaCha20Rng, mean: f64, sd: f64| -> f64 {
        Normal::new(mean, sd).unwrap().sample(rng)
    };
    let is_false = label == Label::FalseTrigger;
    let num_frames = rng.random_range(5..=35u32);
    let am_score = -0.8 * num_frames as f64 + normal(rng, 0.0, 3.0 * sigma);
    let lm_score = normal(rng, -4.0, 1.5 * sigma);
    let lp_center = if is_false { 0.8 } else { 0.05 };
    let log_posterior = -normal(rng, lp_center, sigma).abs();
    // label-conditioned phone-embedding clusters with alternating-sign means
    let mut phone_embedding = [0.0; PHONE_EMBEDDING_DIM];
    for (d, slot) in phone_embedding.iter_mut().enumerate() {
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        let mean = if is_false { -0.4 * sign } else { 0.4 * sign };
        // round through the serializer's 9-digit form so generated lattices
        // survive serialize→parse exactly
        *slot = canon9(normal(rng, mean, 0.6));
    }
    Arc {
        start_state: start,
        end_state: end,
        word,
        features: ArcFeatures {
            phone_embedding,
            am_score: canon9(am_score),
            lm_score: canon9(lm_score),
            log_posterior: canon9(log_posterior).min(0.0),
            num_frames,
            trigger_flag_1: flag1,
            trigger_flag_2: flag2,
        },
    }
}

fn filler_word(spec: &SynthSpec, rng: &mut ChaCha20Rng) -> String {
    let k = rng.random_range(TRIGGER_PHRASE.len()..spec.vocab_size);
    format!("w{k:02}")
}

/// Generate the full shuffled corpus: `num_true + num_false` lattices with
/// sequential utterance ids, deterministic per seed.
pub fn gen_corpus(spec: &SynthSpec) -> Result<Vec<Lattice>, SynthError> {
    spec.validate()?;
    let mut lattices = Vec::with_capacity(spec.num_true + spec.num_false);
    for i in 0..spec.num_true + spec.num_false {
        let label = if i < spec.num_true {
            Label::TrueTrigger
        } else {
            Label::FalseTrigger
        };
        let mut rng = ChaCha20Rng::seed_from_u64(lattice_seed(spec.seed, i as u64));
        lattices.push(gen_lattice(spec, label, &mut rng));
    }
    // deterministic shuffle, then assign ids in final order
    let mut order: Vec<usize> = (0..lattices.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(lattice_seed(spec.seed, u64::MAX));
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let mut out: Vec<Lattice> = order.into_iter().map(|i| lattices[i].clone()).collect();
    for (i, lat) in out.iter_mut().enumerate() {
        lat.utterance_id = format!("utt{:06}", i + 1);
    }
    Ok(out)
}

/// Independent per-lattice stream so generation could be partitioned.
fn lattice_seed(seed: u64, index: u64) -> u64 {
    let x = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

//! Deterministic synthetic preference data with a known weight vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fusion::TieMode;
use crate::model::{PreferenceLabel, PreferencePair, ScoreVector};

#[derive(Debug, Clone, PartialEq)]
pub struct PairGenerator {
    /// Ground-truth weights; labels follow the sign of `delta . truth`.
    pub truth: [f64; 4],
    /// Score differences are drawn uniformly from `[-max_delta, max_delta]`.
    pub max_delta: f64,
    /// Pairs with `|delta . truth| < tie_margin` are labelled Tie.
    pub tie_margin: f64,
    /// Probability of replacing the label with a different, random one.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for PairGenerator {
    fn default() -> Self {
        Self {
            truth: [0.2, 0.5, 0.2, 0.1],
            max_delta: 2.0,
            tie_margin: 0.0,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

impl PairGenerator {
    pub fn generate(&self, n: usize) -> Vec<PreferencePair> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n).map(|i| self.one(i, &mut rng)).collect()
    }

    fn one(&self, index: usize, rng: &mut ChaCha8Rng) -> PreferencePair {
        let mut a = [0.0; 4];
        let mut b = [0.0; 4];
        let mut margin = 0.0;
        for k in 0..4 {
            let delta = rng.gen_range(-self.max_delta..=self.max_delta);
            // place B so that both B and B + delta stay within [1, 5]
            let lo = 1.0f64.max(1.0 - delta);
            let hi = 5.0f64.min(5.0 - delta);
            b[k] = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            a[k] = (b[k] + delta).clamp(1.0, 5.0);
            margin += (a[k] - b[k]) * self.truth[k];
        }
        let mut label = if margin.abs() < self.tie_margin || margin == 0.0 {
            PreferenceLabel::Tie
        } else if margin > 0.0 {
            PreferenceLabel::APreferred
        } else {
            PreferenceLabel::BPreferred
        };
        if self.label_noise > 0.0 && rng.gen_bool(self.label_noise) {
            let others: Vec<PreferenceLabel> = [
                PreferenceLabel::APreferred,
                PreferenceLabel::BPreferred,
                PreferenceLabel::Tie,
            ]
            .into_iter()
            .filter(|l| *l != label)
            .collect();
            label = others[rng.gen_range(0..others.len())];
        }
        PreferencePair {
            pair_id: format!("pair-{index:05}"),
            image_a_id: format!("img-{index:05}-a"),
            image_b_id: format!("img-{index:05}-b"),
            scores_a: ScoreVector::new(a).expect("generated scores are in range"),
            scores_b: ScoreVector::new(b).expect("generated scores are in range"),
            label,
            annotator_id: "synthetic".into(),
        }
    }
}

/// Cosine similarity of two 4-vectors.
pub fn cosine(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Tie mode that matches a generator's labels: soft ties when ties occur.
pub fn natural_tie_mode(pairs: &[PreferencePair]) -> TieMode {
    if pairs.iter().any(|p| p.label == PreferenceLabel::Tie) {
        TieMode::SoftHalf
    } else {
        TieMode::Drop
    }
}

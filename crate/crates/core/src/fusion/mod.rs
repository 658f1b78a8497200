//! Bradley–Terry fusion of per-dimension scores into one scalar.
//!
//! Preferences are modelled as `P(A > B) = sigmoid((x_A - x_B) . w)`; the
//! weights minimise the mean negative log-likelihood and the fused score is
//! the plain dot product `x . w`.

mod fit;
mod loss;

use serde::{Deserialize, Serialize};

pub use fit::{fit_weights, Backtracking, FitConfig, FitResult};
pub use loss::{bt_gradient, bt_loss, BtObjective, TieMode};

use crate::error::Result;
use crate::model::{Dimension, FusionWeights, PartialScores, ScoreVector};

/// Weighted sum of the dimension scores using the raw weights.
pub fn fuse(scores: &ScoreVector, weights: &FusionWeights) -> f64 {
    let (x, w) = (scores.values(), weights.raw());
    x[0] * w[0] + x[1] * w[1] + x[2] * w[2] + x[3] * w[3]
}

/// Fuse scores that may lack dimensions; every dimension must be present.
pub fn fuse_partial(scores: &PartialScores, weights: &FusionWeights) -> Result<f64> {
    Ok(fuse(&scores.to_vector()?, weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsMeta {
    pub pair_count_used: usize,
    pub final_loss: f64,
    pub tie_mode: TieMode,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
}

/// On-disk weights document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    #[serde(flatten)]
    pub weights: FusionWeights,
    pub meta: WeightsMeta,
}

impl WeightsFile {
    pub fn from_fit(result: &FitResult, tie_mode: TieMode) -> Self {
        Self {
            weights: result.weights,
            meta: WeightsMeta {
                pair_count_used: result.pair_count_used,
                final_loss: result.final_loss,
                tie_mode,
                iterations: result.iterations,
                converged: result.converged,
            },
        }
    }
}

/// Display helper: `layout=0.2000 harmony=...`.
pub fn describe(weights: &FusionWeights) -> String {
    Dimension::ALL
        .iter()
        .zip(weights.raw())
        .map(|(d, w)| format!("{d}={w:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::{PreferenceLabel, PreferencePair};

    fn sv(v: [f64; 4]) -> ScoreVector {
        ScoreVector::new(v).unwrap()
    }

    #[test]
    fn fuse_hand_cases() {
        assert_eq!(fuse(&sv([4.0; 4]), &FusionWeights::equal()), 4.0);
        assert_eq!(fuse(&sv([1.0, 2.0, 3.0, 4.0]), &FusionWeights::new([1.0, 0.0, 0.0, 0.0])), 1.0);
        let s = fuse(&sv([3.0, 4.0, 2.0, 5.0]), &FusionWeights::new([0.1, 0.5, 0.2, 0.2]));
        assert!((s - 3.7).abs() < 1e-12);
    }

    #[test]
    fn fuse_partial_requires_all_dimensions() {
        let mut p = PartialScores::default();
        p.set(Dimension::Layout, 3.0);
        assert!(matches!(
            fuse_partial(&p, &FusionWeights::equal()),
            Err(Error::MissingDimension(Dimension::Harmony))
        ));
    }

    fn single_pair() -> Vec<PreferencePair> {
        vec![PreferencePair {
            pair_id: "p".into(),
            image_a_id: "a".into(),
            image_b_id: "b".into(),
            scores_a: sv([4.0, 3.0, 3.0, 3.0]),
            scores_b: sv([3.0; 4]),
            label: PreferenceLabel::APreferred,
            annotator_id: "r".into(),
        }]
    }

    #[test]
    fn regularised_single_pair_converges() {
        let cfg = FitConfig {
            l2: 0.01,
            ..FitConfig::default()
        };
        let fit = fit_weights(&single_pair(), &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.weights.raw()[0] > 0.0);
        assert!(fit.final_loss < std::f64::consts::LN_2);
        for step in fit.loss_history.windows(2) {
            assert!(step[1] <= step[0]);
        }
    }

    #[test]
    fn starting_at_optimum_stops_immediately() {
        let cfg = FitConfig {
            l2: 0.01,
            ..FitConfig::default()
        };
        let first = fit_weights(&single_pair(), &cfg).unwrap();
        let again = fit_weights(
            &single_pair(),
            &FitConfig {
                init: *first.weights.raw(),
                ..cfg
            },
        )
        .unwrap();
        assert!(again.converged);
        assert!(again.iterations <= 2);
    }

    #[test]
    fn all_zero_deltas_rejected() {
        let mut pairs = single_pair();
        pairs[0].scores_a = pairs[0].scores_b;
        assert!(matches!(fit_weights(&pairs, &FitConfig::default()), Err(Error::DegeneratePairs)));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = FitConfig {
            max_iters: 0,
            ..FitConfig::default()
        };
        assert!(matches!(fit_weights(&single_pair(), &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn weights_file_shape() {
        let fit = fit_weights(&single_pair(), &FitConfig { l2: 0.01, ..FitConfig::default() }).unwrap();
        let doc = WeightsFile::from_fit(&fit, TieMode::SoftHalf);
        let json: serde_json::Value = serde_json::to_value(&doc).unwrap();
        assert!(json["w"].as_array().unwrap().len() == 4);
        assert!(json["normalized_view"].is_array());
        assert_eq!(json["meta"]["pair_count_used"], 1);
        assert_eq!(json["meta"]["tie_mode"], "soft_half");
        let back: WeightsFile = serde_json::from_value(json).unwrap();
        assert_eq!(back, doc);
    }
}

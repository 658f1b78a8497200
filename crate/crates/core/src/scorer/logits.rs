use crate::error::{Error, Result};
use crate::model::{RatingDistribution, RatingLevel};

/// Softmax over the five rating-word logits (excellent first).
pub fn normalize_logits(logits: &[f64; 5]) -> Result<RatingDistribution> {
    if let Some((index, &value)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteLogit { index, value });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - max).exp());
    let z: f64 = exps.iter().sum();
    RatingDistribution::new(exps.map(|e| e / z))
}

/// Renormalise probabilities reported by a backend.
pub fn normalize_probabilities(probs: &[f64; 5]) -> Result<RatingDistribution> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!("bad probabilities {probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("probabilities sum to zero".into()));
    }
    RatingDistribution::new(probs.map(|p| p / total))
}

/// Expected rating value, excellent = 5 down to bad = 1.
///
/// Evaluated around the midpoint as `3 + 2 (p_excellent - p_bad) +
/// (p_good - p_poor)`, which is exact for symmetric distributions such as the
/// uniform one.
pub fn expected_score(dist: &RatingDistribution) -> f64 {
    debug_assert_eq!(RatingLevel::DESCENDING[0], RatingLevel::Excellent);
    let p = dist.probabilities();
    let score = 3.0 + 2.0 * (p[0] - p[4]) + (p[1] - p[3]);
    // rounding can push a one-hot extreme a hair outside the scale
    score.clamp(1.0, 5.0)
}

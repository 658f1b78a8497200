//! Pairwise ranking accuracy with a tie threshold.
//!
//! A pair is predicted as a tie when the fused scores differ by strictly less
//! than the threshold, otherwise the higher-scoring image is predicted to win.
//! Exactly equal scores carry no sign and are always predicted as a tie.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::fuse;
use crate::model::{FusionWeights, PreferenceLabel, PreferencePair, ScoreVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEvalResult {
    pub method: String,
    pub threshold: f64,
    pub rank_accuracy: f64,
    pub n_pairs: usize,
}

/// Threshold search grid `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 4.0,
            step: 0.005,
        }
    }
}

impl ThresholdGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo >= 0.0 && self.hi >= self.lo && self.step > 0.0 && self.hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad threshold grid {self:?}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The k-th grid point, computed directly rather than by accumulation.
    pub fn point(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }
}

pub fn predict_label(score_a: f64, score_b: f64, threshold: f64) -> PreferenceLabel {
    let diff = score_a - score_b;
    if diff == 0.0 || diff.abs() < threshold {
        PreferenceLabel::Tie
    } else if diff > 0.0 {
        PreferenceLabel::APreferred
    } else {
        PreferenceLabel::BPreferred
    }
}

fn lookup(scores: &HashMap<String, f64>, pair: &PreferencePair) -> Result<(f64, f64)> {
    let get = |id: &String| {
        scores.get(id).copied().ok_or_else(|| Error::MissingScore {
            pair_id: pair.pair_id.clone(),
            image_id: id.clone(),
        })
    };
    Ok((get(&pair.image_a_id)?, get(&pair.image_b_id)?))
}

pub fn rank_accuracy(
    pairs: &[PreferencePair],
    scores: &HashMap<String, f64>,
    threshold: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::NoPairs("empty pair set".into()));
    }
    let mut correct = 0usize;
    for pair in pairs {
        let (a, b) = lookup(scores, pair)?;
        if predict_label(a, b, threshold) == pair.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Grid search for the accuracy-maximising threshold; the smallest maximiser
/// wins.
///
/// Pairs are sorted by absolute score gap and swept once against the ascending
/// grid, so the cost is `O(n log n + grid)`.
pub fn optimize_threshold(
    method: &str,
    pairs: &[PreferencePair],
    scores: &HashMap<String, f64>,
    grid: ThresholdGrid,
) -> Result<RankEvalResult> {
    grid.validate()?;
    if pairs.is_empty() {
        return Err(Error::NoPairs("empty pair set".into()));
    }

    // correct count when only zero-gap pairs are predicted as ties
    let mut base = 0i64;
    // (gap, change in correct count once the pair flips to a tie prediction)
    let mut flips: Vec<(f64, i64)> = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (a, b) = lookup(scores, pair)?;
        let diff = a - b;
        let is_tie = pair.label == PreferenceLabel::Tie;
        if diff == 0.0 {
            base += is_tie as i64;
            continue;
        }
        let decisive = if diff > 0.0 {
            PreferenceLabel::APreferred
        } else {
            PreferenceLabel::BPreferred
        };
        let decisive_correct = pair.label == decisive;
        base += decisive_correct as i64;
        flips.push((diff.abs(), is_tie as i64 - decisive_correct as i64));
    }
    flips.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut next = 0;
    let mut running = base;
    let mut best: Option<(i64, f64)> = None;
    for threshold in grid.points() {
        while next < flips.len() && flips[next].0 < threshold {
            running += flips[next].1;
            next += 1;
        }
        if best.is_none_or(|(count, _)| running > count) {
            best = Some((running, threshold));
        }
    }
    let (count, threshold) = best.expect("grid has at least one point");
    Ok(RankEvalResult {
        method: method.to_string(),
        threshold,
        rank_accuracy: count as f64 / pairs.len() as f64,
        n_pairs: pairs.len(),
    })
}

/// Fused score per image from the score vectors carried by the pairs.
pub fn fused_scores(
    pairs: &[PreferencePair],
    weights: &FusionWeights,
) -> Result<HashMap<String, f64>> {
    let mut vectors: HashMap<&str, ScoreVector> = HashMap::new();
    for pair in pairs {
        for (id, v) in [(&pair.image_a_id, pair.scores_a), (&pair.image_b_id, pair.scores_b)] {
            match vectors.get(id.as_str()) {
                Some(existing) if *existing != v => {
                    return Err(Error::ConflictingScores(id.clone()));
                }
                Some(_) => {}
                None => {
                    vectors.insert(id, v);
                }
            }
        }
    }
    Ok(vectors
        .into_iter()
        .map(|(id, v)| (id.to_string(), fuse(&v, weights)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, label: PreferenceLabel) -> PreferencePair {
        let v = ScoreVector::new([3.0; 4]).unwrap();
        PreferencePair {
            pair_id: id.into(),
            image_a_id: format!("{id}-a"),
            image_b_id: format!("{id}-b"),
            scores_a: v,
            scores_b: v,
            label,
            annotator_id: "r".into(),
        }
    }

    fn scores(entries: &[(&str, f64, f64)]) -> HashMap<String, f64> {
        entries
            .iter()
            .flat_map(|(id, a, b)| [(format!("{id}-a"), *a), (format!("{id}-b"), *b)])
            .collect()
    }

    #[test]
    fn zero_threshold_all_decisive_correct() {
        let pairs = vec![pair("p0", PreferenceLabel::APreferred), pair("p1", PreferenceLabel::APreferred)];
        let s = scores(&[("p0", 4.0, 3.0), ("p1", 2.5, 1.0)]);
        assert_eq!(rank_accuracy(&pairs, &s, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn huge_threshold_predicts_all_ties() {
        let pairs = vec![pair("p0", PreferenceLabel::Tie), pair("p1", PreferenceLabel::Tie)];
        let s = scores(&[("p0", 5.0, 1.0), ("p1", 1.0, 4.0)]);
        assert_eq!(rank_accuracy(&pairs, &s, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn hand_evaluated_rule() {
        let pairs = vec![
            pair("p0", PreferenceLabel::APreferred),
            pair("p1", PreferenceLabel::BPreferred),
            pair("p2", PreferenceLabel::Tie),
        ];
        let s = scores(&[("p0", 3.5, 3.0), ("p1", 3.0, 3.5), ("p2", 3.1, 3.0)]);
        assert_eq!(rank_accuracy(&pairs, &s, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn missing_score_names_pair() {
        let pairs = vec![pair("p7", PreferenceLabel::Tie)];
        let err = rank_accuracy(&pairs, &HashMap::new(), 0.1).unwrap_err();
        assert!(matches!(err, Error::MissingScore { ref pair_id, .. } if pair_id == "p7"));
    }

    #[test]
    fn decisive_ordered_pairs_pick_zero_threshold() {
        let pairs = vec![pair("p0", PreferenceLabel::APreferred), pair("p1", PreferenceLabel::BPreferred)];
        let s = scores(&[("p0", 4.0, 3.0), ("p1", 2.0, 2.5)]);
        let r = optimize_threshold("x", &pairs, &s, ThresholdGrid::default()).unwrap();
        assert_eq!(r.threshold, 0.0);
        assert_eq!(r.rank_accuracy, 1.0);
    }

    #[test]
    fn single_tie_pair_picks_first_grid_point_above_gap() {
        let pairs = vec![pair("p0", PreferenceLabel::Tie)];
        let s = scores(&[("p0", 0.3, 0.0)]);
        let r = optimize_threshold("x", &pairs, &s, ThresholdGrid::default()).unwrap();
        assert_eq!(r.threshold, ThresholdGrid::default().point(61));
        assert!((r.threshold - 0.305).abs() < 1e-12);
        assert_eq!(r.rank_accuracy, 1.0);
    }

    #[test]
    fn grid_has_expected_size() {
        let g = ThresholdGrid::default();
        assert_eq!(g.len(), 801);
        assert_eq!(g.point(800), 4.0);
    }
}

//! Domain types shared across the toolkit.
//!
//! Every per-dimension array in the crate (score vectors, fusion weights,
//! report columns) is indexed by [`Dimension::ALL`] order: Layout, Harmony,
//! Lighting, Distortion.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest and highest values on the rating scale.
pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    #[serde(alias = "Layout")]
    Layout,
    #[serde(alias = "Harmony")]
    Harmony,
    #[serde(alias = "Lighting")]
    Lighting,
    #[serde(alias = "Distortion")]
    Distortion,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Layout,
        Dimension::Harmony,
        Dimension::Lighting,
        Dimension::Distortion,
    ];

    pub fn index(self) -> usize {
        match self {
            Dimension::Layout => 0,
            Dimension::Harmony => 1,
            Dimension::Lighting => 2,
            Dimension::Distortion => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Dimension> {
        Self::ALL.get(index).copied()
    }

    /// Lowercase name used in files, prompts and tag tokens.
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Layout => "layout",
            Dimension::Harmony => "harmony",
            Dimension::Lighting => "lighting",
            Dimension::Distortion => "distortion",
        }
    }

    /// Capitalised name used in report headers.
    pub fn title(self) -> &'static str {
        match self {
            Dimension::Layout => "Layout",
            Dimension::Harmony => "Harmony",
            Dimension::Lighting => "Lighting",
            Dimension::Distortion => "Distortion",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

/// The five rating words, ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingLevel {
    Excellent,
    Good,
    Fair,
    Poor,
    Bad,
}

impl RatingLevel {
    /// Descending order; this is also the order of logits and probabilities.
    pub const DESCENDING: [RatingLevel; 5] = [
        RatingLevel::Excellent,
        RatingLevel::Good,
        RatingLevel::Fair,
        RatingLevel::Poor,
        RatingLevel::Bad,
    ];

    pub fn value(self) -> u8 {
        match self {
            RatingLevel::Excellent => 5,
            RatingLevel::Good => 4,
            RatingLevel::Fair => 3,
            RatingLevel::Poor => 2,
            RatingLevel::Bad => 1,
        }
    }

    pub fn from_value(value: u8) -> Option<RatingLevel> {
        Self::DESCENDING.into_iter().find(|l| l.value() == value)
    }

    pub fn word(self) -> &'static str {
        match self {
            RatingLevel::Excellent => "excellent",
            RatingLevel::Good => "good",
            RatingLevel::Fair => "fair",
            RatingLevel::Poor => "poor",
            RatingLevel::Bad => "bad",
        }
    }

    pub fn from_word(word: &str) -> Option<RatingLevel> {
        Self::DESCENDING
            .into_iter()
            .find(|l| l.word().eq_ignore_ascii_case(word.trim()))
    }
}

/// One rater's score for one image on one dimension.
///
/// `score` is kept as a raw integer so that out-of-range input survives
/// parsing and can be reported by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub dimension: Dimension,
    pub annotator_id: String,
    pub score: i64,
    pub batch_id: String,
}

impl AnnotationRecord {
    pub fn is_in_range(&self) -> bool {
        (1..=5).contains(&self.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub image_id: String,
    pub dimension: Dimension,
    pub mos: f64,
    pub n_ratings: usize,
    pub outlier_count: usize,
}

/// Probabilities over the rating words, excellent first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct RatingDistribution([f64; 5]);

impl RatingDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probabilities: [f64; 5]) -> Result<Self> {
        if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self(probabilities))
    }

    pub fn one_hot(level: RatingLevel) -> Self {
        let mut p = [0.0; 5];
        p[RatingLevel::DESCENDING.iter().position(|l| *l == level).unwrap()] = 1.0;
        Self(p)
    }

    pub fn probabilities(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn probability(&self, level: RatingLevel) -> f64 {
        self.0[RatingLevel::DESCENDING.iter().position(|l| *l == level).unwrap()]
    }
}

impl TryFrom<[f64; 5]> for RatingDistribution {
    type Error = Error;

    fn try_from(value: [f64; 5]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<RatingDistribution> for [f64; 5] {
    fn from(value: RatingDistribution) -> Self {
        value.0
    }
}

/// Per-dimension scores, each within [1,5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ScoreVector([f64; 4]);

impl ScoreVector {
    pub fn new(values: [f64; 4]) -> Result<Self> {
        for (dimension, value) in Dimension::ALL.into_iter().zip(values) {
            if !(MIN_SCORE..=MAX_SCORE).contains(&value) {
                return Err(Error::ScoreVectorRange { dimension, value });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64; 4] {
        &self.0
    }

    pub fn get(&self, dimension: Dimension) -> f64 {
        self.0[dimension.index()]
    }
}

impl Index<Dimension> for ScoreVector {
    type Output = f64;

    fn index(&self, dimension: Dimension) -> &f64 {
        &self.0[dimension.index()]
    }
}

impl TryFrom<[f64; 4]> for ScoreVector {
    type Error = Error;

    fn try_from(value: [f64; 4]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ScoreVector> for [f64; 4] {
    fn from(value: ScoreVector) -> Self {
        value.0
    }
}

/// Scores for a subset of dimensions, as produced by scoring only some of them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialScores([Option<f64>; 4]);

impl PartialScores {
    pub fn get(&self, dimension: Dimension) -> Option<f64> {
        self.0[dimension.index()]
    }

    pub fn set(&mut self, dimension: Dimension, score: f64) {
        self.0[dimension.index()] = Some(score);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Dimension, f64)> + '_ {
        Dimension::ALL
            .into_iter()
            .filter_map(|d| self.get(d).map(|s| (d, s)))
    }

    pub fn to_vector(&self) -> Result<ScoreVector> {
        let mut values = [0.0; 4];
        for d in Dimension::ALL {
            values[d.index()] = self.get(d).ok_or(Error::MissingDimension(d))?;
        }
        ScoreVector::new(values)
    }
}

impl From<ScoreVector> for PartialScores {
    fn from(value: ScoreVector) -> Self {
        Self(value.0.map(Some))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreferenceLabel {
    #[serde(rename = "A", alias = "a", alias = "APreferred")]
    APreferred,
    #[serde(rename = "B", alias = "b", alias = "BPreferred")]
    BPreferred,
    #[serde(rename = "Tie", alias = "tie")]
    Tie,
}

impl PreferenceLabel {
    /// The label after swapping the two images.
    pub fn swapped(self) -> Self {
        match self {
            PreferenceLabel::APreferred => PreferenceLabel::BPreferred,
            PreferenceLabel::BPreferred => PreferenceLabel::APreferred,
            PreferenceLabel::Tie => PreferenceLabel::Tie,
        }
    }
}

impl FromStr for PreferenceLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "apreferred" => Ok(PreferenceLabel::APreferred),
            "b" | "bpreferred" => Ok(PreferenceLabel::BPreferred),
            "tie" | "t" => Ok(PreferenceLabel::Tie),
            other => Err(format!("unknown preference label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub pair_id: String,
    pub image_a_id: String,
    pub image_b_id: String,
    pub scores_a: ScoreVector,
    pub scores_b: ScoreVector,
    pub label: PreferenceLabel,
    pub annotator_id: String,
}

impl PreferencePair {
    pub fn validate(&self) -> Result<()> {
        if self.image_a_id == self.image_b_id {
            return Err(Error::SelfPair(self.pair_id.clone()));
        }
        Ok(())
    }

    /// `scores_a - scores_b`.
    pub fn delta(&self) -> [f64; 4] {
        let (a, b) = (self.scores_a.values(), self.scores_b.values());
        [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
    }

    /// The same comparison with A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pair_id: self.pair_id.clone(),
            image_a_id: self.image_b_id.clone(),
            image_b_id: self.image_a_id.clone(),
            scores_a: self.scores_b,
            scores_b: self.scores_a,
            label: self.label.swapped(),
            annotator_id: self.annotator_id.clone(),
        }
    }
}

/// Fusion weights in canonical dimension order.
///
/// `normalized_view` is `w / sum(w)` for display; it is `None` when the sum is
/// zero. Fusion always uses the raw `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "WeightsRepr", into = "WeightsRepr")]
pub struct FusionWeights {
    w: [f64; 4],
    normalized_view: Option<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
struct WeightsRepr {
    w: [f64; 4],
    #[serde(default)]
    normalized_view: Option<[f64; 4]>,
}

impl From<WeightsRepr> for FusionWeights {
    fn from(repr: WeightsRepr) -> Self {
        FusionWeights::new(repr.w)
    }
}

impl From<FusionWeights> for WeightsRepr {
    fn from(weights: FusionWeights) -> Self {
        WeightsRepr {
            w: weights.w,
            normalized_view: weights.normalized_view,
        }
    }
}

impl FusionWeights {
    pub fn new(w: [f64; 4]) -> Self {
        let sum: f64 = w.iter().sum();
        let normalized_view = (sum != 0.0 && sum.is_finite()).then(|| w.map(|x| x / sum));
        Self { w, normalized_view }
    }

    /// 1:1:1:1 weighting scaled so fused scores stay on the rating scale.
    pub fn equal() -> Self {
        Self::new([0.25; 4])
    }

    /// All weight on one dimension.
    pub fn single(dimension: Dimension) -> Self {
        let mut w = [0.0; 4];
        w[dimension.index()] = 1.0;
        Self::new(w)
    }

    pub fn raw(&self) -> &[f64; 4] {
        &self.w
    }

    pub fn normalized_view(&self) -> Option<&[f64; 4]> {
        self.normalized_view.as_ref()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.w.map(|x| x * factor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateEntry {
    pub image_id: String,
    pub dimension: Dimension,
    pub annotator_id: String,
    /// Zero-based positions of every record sharing the key.
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutOfRangeEntry {
    pub position: usize,
    pub image_id: String,
    pub dimension: Dimension,
    pub annotator_id: String,
    pub score: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Record counts in canonical dimension order.
    pub counts: [usize; 4],
    pub duplicates: Vec<DuplicateEntry>,
    pub out_of_range: Vec<OutOfRangeEntry>,
}

impl ValidationReport {
    pub fn violation_count(&self) -> usize {
        self.duplicates.len() + self.out_of_range.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }
}

pub fn validate_dataset(records: &[AnnotationRecord]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen: BTreeMap<(&str, Dimension, &str), Vec<usize>> = BTreeMap::new();

    for (position, record) in records.iter().enumerate() {
        report.counts[record.dimension.index()] += 1;
        if !record.is_in_range() {
            report.out_of_range.push(OutOfRangeEntry {
                position,
                image_id: record.image_id.clone(),
                dimension: record.dimension,
                annotator_id: record.annotator_id.clone(),
                score: record.score,
            });
        }
        seen.entry((&record.image_id, record.dimension, &record.annotator_id))
            .or_default()
            .push(position);
    }

    report.duplicates = seen
        .into_iter()
        .filter(|(_, positions)| positions.len() > 1)
        .map(|((image_id, dimension, annotator_id), positions)| DuplicateEntry {
            image_id: image_id.to_string(),
            dimension,
            annotator_id: annotator_id.to_string(),
            positions,
        })
        .collect();
    report
}

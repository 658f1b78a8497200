use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationRecord, Dimension, MosRecord};

/// A rating with its (possibly replaced) value. The original integer score is
/// kept on `record` so cleaning can always be recomputed from the raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedRating {
    #[serde(flatten)]
    pub record: AnnotationRecord,
    pub value: f64,
    pub replaced: bool,
}

impl From<AnnotationRecord> for CleanedRating {
    fn from(record: AnnotationRecord) -> Self {
        let value = record.score as f64;
        Self {
            record,
            value,
            replaced: false,
        }
    }
}

/// All ratings for one (image, dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingGroup {
    pub image_id: String,
    pub dimension: Dimension,
    pub ratings: Vec<CleanedRating>,
}

impl RatingGroup {
    pub fn original_scores(&self) -> impl Iterator<Item = i64> + '_ {
        self.ratings.iter().map(|r| r.record.score)
    }
}

/// Groups records by (image_id, dimension), ordered by that key; ratings keep
/// their input order within a group.
pub fn group_annotations(records: &[AnnotationRecord]) -> Vec<RatingGroup> {
    let mut groups: BTreeMap<(String, Dimension), Vec<CleanedRating>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.image_id.clone(), r.dimension))
            .or_default()
            .push(r.clone().into());
    }
    groups
        .into_iter()
        .map(|((image_id, dimension), ratings)| RatingGroup {
            image_id,
            dimension,
            ratings,
        })
        .collect()
}

pub(crate) fn check_group(group: &RatingGroup) -> Result<()> {
    if group.ratings.is_empty() {
        return Err(Error::EmptyGroup {
            image_id: group.image_id.clone(),
            dimension: group.dimension,
        });
    }
    if let Some(bad) = group.ratings.iter().find(|r| !r.record.is_in_range()) {
        return Err(Error::ScoreOutOfRange {
            image_id: bad.record.image_id.clone(),
            dimension: bad.record.dimension,
            annotator_id: bad.record.annotator_id.clone(),
            score: bad.record.score,
        });
    }
    Ok(())
}

/// Arithmetic mean of each group's current rating values.
pub fn aggregate_mos(groups: &[RatingGroup]) -> Result<Vec<MosRecord>> {
    groups
        .iter()
        .map(|group| {
            check_group(group)?;
            let n = group.ratings.len();
            let sum: f64 = group.ratings.iter().map(|r| r.value).sum();
            Ok(MosRecord {
                image_id: group.image_id.clone(),
                dimension: group.dimension,
                mos: (sum / n as f64).clamp(1.0, 5.0),
                n_ratings: n,
                outlier_count: group.ratings.iter().filter(|r| r.replaced).count(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn group_of(scores: &[i64]) -> RatingGroup {
        RatingGroup {
            image_id: "img".into(),
            dimension: Dimension::Harmony,
            ratings: scores
                .iter()
                .enumerate()
                .map(|(i, &score)| {
                    AnnotationRecord {
                        image_id: "img".into(),
                        dimension: Dimension::Harmony,
                        annotator_id: format!("r{i}"),
                        score,
                        batch_id: "b".into(),
                    }
                    .into()
                })
                .collect(),
        }
    }

    #[test]
    fn mos_hand_cases() {
        for (scores, expected) in [(&[4, 4, 4, 4, 4][..], 4.0), (&[4, 4, 5, 3, 4], 4.0), (&[1, 5], 3.0)] {
            let mos = aggregate_mos(&[group_of(scores)]).unwrap();
            assert_eq!(mos[0].mos, expected);
            assert_eq!(mos[0].n_ratings, scores.len());
            assert_eq!(mos[0].outlier_count, 0);
        }
    }

    #[test]
    fn empty_group_errors() {
        let err = aggregate_mos(&[group_of(&[])]).unwrap_err();
        assert!(err.to_string().contains("no ratings for image/dimension"));
    }

    #[test]
    fn out_of_range_errors() {
        assert!(matches!(
            aggregate_mos(&[group_of(&[3, 7])]),
            Err(Error::ScoreOutOfRange { score: 7, .. })
        ));
    }

    #[test]
    fn grouping_is_keyed_and_ordered() {
        let rec = |image: &str, d: Dimension, a: &str| AnnotationRecord {
            image_id: image.into(),
            dimension: d,
            annotator_id: a.into(),
            score: 3,
            batch_id: "b".into(),
        };
        let groups = group_annotations(&[
            rec("b", Dimension::Layout, "r1"),
            rec("a", Dimension::Harmony, "r1"),
            rec("a", Dimension::Layout, "r2"),
            rec("a", Dimension::Layout, "r1"),
        ]);
        let keys: Vec<(&str, Dimension, usize)> = groups
            .iter()
            .map(|g| (g.image_id.as_str(), g.dimension, g.ratings.len()))
            .collect();
        assert_eq!(
            keys,
            vec![("a", Dimension::Layout, 2), ("a", Dimension::Harmony, 1), ("b", Dimension::Layout, 1)]
        );
        assert_eq!(groups[0].ratings[0].record.annotator_id, "r2");
    }
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::CleaningConfig;
use crate::evaluation::srcc;
use crate::model::{AnnotationRecord, Dimension, MosRecord};

/// Agreement of one rater with the consensus.
///
/// `dimension` is `None` for the roll-up across every dimension the rater
/// scored. `srcc_vs_mos` is `None` when fewer than two common items exist or
/// either side is constant; such raters are never flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterReport {
    pub annotator_id: String,
    pub dimension: Option<Dimension>,
    pub srcc_vs_mos: Option<f64>,
    pub n_common: usize,
    pub flagged: bool,
}

pub fn rater_reliability(
    records: &[AnnotationRecord],
    mos: &[MosRecord],
    config: &CleaningConfig,
) -> Vec<RaterReport> {
    let consensus: HashMap<(&str, Dimension), f64> = mos
        .iter()
        .map(|m| ((m.image_id.as_str(), m.dimension), m.mos))
        .collect();

    // (annotator, dimension) -> (rater scores, MOS); BTreeMap for stable output
    let mut per_dim: BTreeMap<(&str, Dimension), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        if let Some(&m) = consensus.get(&(r.image_id.as_str(), r.dimension)) {
            let entry = per_dim.entry((&r.annotator_id, r.dimension)).or_default();
            entry.0.push(r.score as f64);
            entry.1.push(m);
        }
    }

    let report = |annotator: &str, dimension, scores: &[f64], targets: &[f64]| {
        let n_common = scores.len();
        let value = if n_common >= 2 {
            srcc(scores, targets).ok()
        } else {
            None
        };
        RaterReport {
            annotator_id: annotator.to_string(),
            dimension,
            srcc_vs_mos: value,
            n_common,
            flagged: value.is_some_and(|v| v < config.srcc_min),
        }
    };

    let mut pooled: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut reports = Vec::new();
    for ((annotator, dimension), (scores, targets)) in &per_dim {
        reports.push(report(annotator, Some(*dimension), scores, targets));
        let entry = pooled.entry(annotator).or_default();
        entry.0.extend_from_slice(scores);
        entry.1.extend_from_slice(targets);
    }
    for (annotator, (scores, targets)) in &pooled {
        reports.push(report(annotator, None, scores, targets));
    }
    reports
}

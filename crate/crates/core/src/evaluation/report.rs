use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{plcc, srcc};
use super::ranking::RankEvalResult;
use crate::error::{Error, Result};
use crate::model::{Dimension, MosRecord};
use crate::scorer::ScoreRecord;

pub const OVERALL: &str = "overall";

/// Correlations for one dimension, or for the pooled set when `label` is
/// [`OVERALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub plcc: f64,
    pub srcc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub method: String,
    /// Always "none": PLCC is computed on raw predictions.
    pub plcc_mapping: String,
    pub rows: Vec<MetricReport>,
}

impl BenchmarkReport {
    pub fn row(&self, label: &str) -> Option<&MetricReport> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Per-dimension and pooled correlations of predictions against MOS.
///
/// Dimensions without predictions are omitted. The overall row pools every
/// matched (prediction, MOS) pair across dimensions.
pub fn benchmark_report(
    method: &str,
    predictions: &[ScoreRecord],
    mos: &[MosRecord],
) -> Result<BenchmarkReport> {
    let truth: HashMap<(&str, Dimension), f64> = mos
        .iter()
        .map(|m| ((m.image_id.as_str(), m.dimension), m.mos))
        .collect();

    let mut per_dim: BTreeMap<Dimension, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut unmatched = Vec::new();
    for p in predictions {
        match truth.get(&(p.image_id.as_str(), p.dimension)) {
            Some(&target) => {
                let entry = per_dim.entry(p.dimension).or_default();
                entry.0.push(p.score);
                entry.1.push(target);
            }
            None => unmatched.push(format!("{}/{}", p.image_id, p.dimension)),
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::UnmatchedPredictions(unmatched));
    }

    let mut rows = Vec::with_capacity(per_dim.len() + 1);
    let (mut all_pred, mut all_target) = (Vec::new(), Vec::new());
    for (dimension, (pred, target)) in &per_dim {
        rows.push(MetricReport {
            label: dimension.as_str().to_string(),
            plcc: plcc(pred, target)?,
            srcc: srcc(pred, target)?,
            n: pred.len(),
        });
        all_pred.extend_from_slice(pred);
        all_target.extend_from_slice(target);
    }
    rows.push(MetricReport {
        label: OVERALL.to_string(),
        plcc: plcc(&all_pred, &all_target)?,
        srcc: srcc(&all_pred, &all_target)?,
        n: all_pred.len(),
    });
    Ok(BenchmarkReport {
        method: method.to_string(),
        plcc_mapping: "none".into(),
        rows,
    })
}

/// Aligned text table: one row per method, "PLCC / SRCC" cells.
pub fn render_table(reports: &[BenchmarkReport]) -> String {
    let mut header = vec!["Method".to_string()];
    header.extend(Dimension::ALL.iter().map(|d| d.title().to_string()));
    header.push("Overall".into());

    let mut body: Vec<Vec<String>> = Vec::with_capacity(reports.len());
    for report in reports {
        let mut row = vec![report.method.clone()];
        let labels = Dimension::ALL.iter().map(|d| d.as_str()).chain([OVERALL]);
        for label in labels {
            row.push(match report.row(label) {
                Some(m) => format!("{:.3} / {:.3}", m.plcc, m.srcc),
                None => "-".into(),
            });
        }
        body.push(row);
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            body.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        let line: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    };
    emit(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    emit(&mut out, &rule);
    for row in &body {
        emit(&mut out, row);
    }
    out
}

/// Text table for threshold-optimised ranking results.
pub fn render_rank_table(results: &[RankEvalResult]) -> String {
    let width = results
        .iter()
        .map(|r| r.method.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>13}  {:>7}", "Method", "Threshold", "Rank Accuracy", "Pairs");
    for r in results {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.3}  {:>13.3}  {:>7}",
            r.method, r.threshold, r.rank_accuracy, r.n_pairs
        );
    }
    out
}

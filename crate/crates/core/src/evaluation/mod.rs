//! Benchmark harness: correlation against MOS and thresholded pairwise
//! ranking accuracy.

mod metrics;
mod ranking;
mod report;

pub use metrics::{plcc, srcc};
pub use ranking::{
    fused_scores, optimize_threshold, predict_label, rank_accuracy, RankEvalResult, ThresholdGrid,
};
pub use report::{
    benchmark_report, render_rank_table, render_table, BenchmarkReport, MetricReport, OVERALL,
};

use super::mos::{aggregate_mos, check_group, RatingGroup};
use super::CleaningConfig;
use crate::error::Result;
use crate::model::MosRecord;

/// Replaces ratings with `|z| > z_max` by the group mean and recomputes MOS.
///
/// Statistics come from the original integer scores (population standard
/// deviation), so running this on its own output gives the same result.
/// Groups whose ratings are all equal are left untouched.
pub fn mitigate_outliers(
    groups: &[RatingGroup],
    config: &CleaningConfig,
) -> Result<(Vec<RatingGroup>, Vec<MosRecord>)> {
    config.validate()?;
    let limit_sq = config.z_max * config.z_max;
    let mut cleaned = Vec::with_capacity(groups.len());

    for group in groups {
        check_group(group)?;
        let n = group.ratings.len() as f64;
        let sum: f64 = group.original_scores().map(|s| s as f64).sum();
        let sum_sq: f64 = group.original_scores().map(|s| (s * s) as f64).sum();
        // n^2 * variance; integer-valued, so exact in f64
        let spread = n * sum_sq - sum * sum;
        let mean = sum / n;

        let mut out = group.clone();
        for rating in &mut out.ratings {
            let x = rating.record.score as f64;
            // z = (n x - S) / sqrt(n Q - S^2); compare squares to keep the
            // |z| = z_max boundary exact
            let centred = n * x - sum;
            let is_outlier = spread > 0.0 && centred * centred > limit_sq * spread;
            rating.replaced = is_outlier;
            rating.value = if is_outlier { mean } else { x };
        }
        cleaned.push(out);
    }

    let mos = aggregate_mos(&cleaned)?;
    Ok((cleaned, mos))
}

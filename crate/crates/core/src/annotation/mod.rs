//! From raw multi-rater annotations to MOS labels: aggregation, rater
//! screening, outlier replacement, batch audits and train/test splitting.

mod audit;
mod mos;
mod outliers;
mod reliability;
mod split;

use serde::{Deserialize, Serialize};

pub use audit::{audit_batches, audit_sample_size, BatchAudit, GoldLabel};
pub use mos::{aggregate_mos, group_annotations, CleanedRating, RatingGroup};
pub use outliers::mitigate_outliers;
pub use reliability::{rater_reliability, RaterReport};
pub use split::{split_train_test, MIN_RECORDS_PER_DIMENSION};

use crate::error::{Error, Result};
use crate::model::{validate_dataset, AnnotationRecord, MosRecord, ValidationReport};

/// Train:test proportion, e.g. 4:1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 4, test: 1 }
    }
}

impl SplitRatio {
    /// Test share of `n` items, rounded half up.
    pub fn test_count(&self, n: usize) -> usize {
        let total = (self.train + self.test) as usize;
        (2 * n * self.test as usize + total) / (2 * total)
    }
}

impl std::str::FromStr for SplitRatio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected TRAIN:TEST, got {s:?}"))?;
        let parse = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{x:?}: {e}"));
        Ok(Self {
            train: parse(a)?,
            test: parse(b)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub srcc_min: f64,
    pub z_max: f64,
    pub audit_fraction: f64,
    pub audit_accuracy_min: f64,
    pub split_ratio: SplitRatio,
    pub rng_seed: u64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            srcc_min: 0.6,
            z_max: 2.0,
            audit_fraction: 0.10,
            audit_accuracy_min: 0.85,
            split_ratio: SplitRatio::default(),
            rng_seed: 0,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        let problem = if !(self.audit_fraction > 0.0 && self.audit_fraction <= 1.0) {
            Some(format!("audit_fraction must be in (0,1], got {}", self.audit_fraction))
        } else if !(self.audit_accuracy_min > 0.0 && self.audit_accuracy_min <= 1.0) {
            Some(format!("audit_accuracy_min must be in (0,1], got {}", self.audit_accuracy_min))
        } else if self.split_ratio.train == 0 || self.split_ratio.test == 0 {
            Some("split ratio parts must be positive".to_string())
        } else if !(self.z_max > 0.0 && self.z_max.is_finite()) {
            Some(format!("z_max must be positive, got {}", self.z_max))
        } else if !self.srcc_min.is_finite() {
            Some("srcc_min must be finite".to_string())
        } else {
            None
        };
        problem.map_or(Ok(()), |p| Err(Error::InvalidConfig(p)))
    }
}

/// Seed for a named sub-stream (batch, stratum) that does not depend on the
/// order in which sub-streams are visited.
pub(crate) fn derive_seed(seed: u64, key: &str) -> u64 {
    // FNV-1a
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in key.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash ^ seed.rotate_left(32)
}

/// Everything produced by one cleaning run.
#[derive(Debug, Clone, PartialEq)]
pub struct CleaningOutput {
    pub validation: ValidationReport,
    /// MOS before outlier replacement; raters are screened against this.
    pub raw_mos: Vec<MosRecord>,
    pub cleaned: Vec<RatingGroup>,
    pub mos: Vec<MosRecord>,
    pub raters: Vec<RaterReport>,
    pub audits: Option<Vec<BatchAudit>>,
}

/// Validation, aggregation, rater screening, outlier mitigation and (when
/// gold labels are given) batch auditing. Fails on any validation violation.
pub fn clean_annotations(
    records: &[AnnotationRecord],
    gold: Option<&[GoldLabel]>,
    config: &CleaningConfig,
) -> std::result::Result<CleaningOutput, CleaningError> {
    config.validate()?;
    let validation = validate_dataset(records);
    if !validation.is_clean() {
        return Err(CleaningError::Invalid(validation));
    }
    let groups = group_annotations(records);
    let raw_mos = aggregate_mos(&groups)?;
    let raters = rater_reliability(records, &raw_mos, config);
    let (cleaned, mos) = mitigate_outliers(&groups, config)?;
    let audits = gold
        .map(|g| audit_batches(records, g, config))
        .transpose()?;
    Ok(CleaningOutput {
        validation,
        raw_mos,
        cleaned,
        mos,
        raters,
        audits,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum CleaningError {
    #[error("dataset failed validation: {} out-of-range, {} duplicate key(s)", .0.out_of_range.len(), .0.duplicates.len())]
    Invalid(ValidationReport),
    #[error(transparent)]
    Other(#[from] Error),
}

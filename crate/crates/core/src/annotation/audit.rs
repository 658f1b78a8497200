use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, CleaningConfig};
use crate::error::{Error, Result};
use crate::model::{AnnotationRecord, Dimension};

/// Reference score for one (image, dimension) used to audit raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub image_id: String,
    pub dimension: Dimension,
    pub score: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAudit {
    pub batch_id: String,
    pub sampled_count: usize,
    pub accuracy: f64,
    pub accepted: bool,
}

/// Number of records to audit in a batch of `size`.
pub fn audit_sample_size(size: usize, fraction: f64) -> usize {
    // tolerance keeps e.g. 0.1 * 20 from rounding up to 3
    (((size as f64) * fraction) - 1e-9).ceil().max(1.0) as usize
}

/// Samples a deterministic subset of each batch among records that have a
/// gold label and scores exact agreement.
pub fn audit_batches(
    records: &[AnnotationRecord],
    gold: &[GoldLabel],
    config: &CleaningConfig,
) -> Result<Vec<BatchAudit>> {
    config.validate()?;
    let gold: HashMap<(&str, Dimension), i64> = gold
        .iter()
        .map(|g| ((g.image_id.as_str(), g.dimension), g.score))
        .collect();

    let mut batches: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        batches.entry(&r.batch_id).or_default().push(r);
    }

    batches
        .into_iter()
        .map(|(batch_id, members)| {
            let needed = audit_sample_size(members.len(), config.audit_fraction);
            let labelled: Vec<(&AnnotationRecord, i64)> = members
                .iter()
                .filter_map(|r| gold.get(&(r.image_id.as_str(), r.dimension)).map(|g| (*r, *g)))
                .collect();
            if labelled.len() < needed {
                return Err(Error::MissingGold {
                    batch_id: batch_id.to_string(),
                    needed,
                    available: labelled.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, batch_id));
            let matches = sample(&mut rng, labelled.len(), needed)
                .into_iter()
                .filter(|&i| labelled[i].0.score == labelled[i].1)
                .count();
            let accuracy = matches as f64 / needed as f64;
            Ok(BatchAudit {
                batch_id: batch_id.to_string(),
                sampled_count: needed,
                accuracy,
                accepted: accuracy >= config.audit_accuracy_min,
            })
        })
        .collect()
}

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, CleaningConfig};
use crate::error::{Error, Result};
use crate::model::{Dimension, MosRecord};

pub const MIN_RECORDS_PER_DIMENSION: usize = 5;

/// Stratified split: within each dimension, records are bucketed by MOS
/// rounded to the nearest integer and every bucket is split by the configured
/// ratio. Both outputs are sorted by (image_id, dimension).
pub fn split_train_test(
    mos: &[MosRecord],
    config: &CleaningConfig,
) -> Result<(Vec<MosRecord>, Vec<MosRecord>)> {
    config.validate()?;
    let ratio = config.split_ratio;

    let mut strata: BTreeMap<(Dimension, i64), Vec<&MosRecord>> = BTreeMap::new();
    let mut per_dim = [0usize; 4];
    for m in mos {
        per_dim[m.dimension.index()] += 1;
        strata.entry((m.dimension, m.mos.round() as i64)).or_default().push(m);
    }
    for d in Dimension::ALL {
        let n = per_dim[d.index()];
        if n > 0 && n < MIN_RECORDS_PER_DIMENSION {
            return Err(Error::InvalidConfig(format!(
                "dimension {d} has {n} records; at least {MIN_RECORDS_PER_DIMENSION} are needed to split"
            )));
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((dimension, bucket), mut members) in strata {
        members.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let key = format!("{dimension}/{bucket}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &key));
        members.shuffle(&mut rng);
        let n_test = ratio.test_count(members.len());
        test.extend(members[..n_test].iter().map(|m| (*m).clone()));
        train.extend(members[n_test..].iter().map(|m| (*m).clone()));
    }
    let order = |a: &MosRecord, b: &MosRecord| {
        (a.image_id.as_str(), a.dimension).cmp(&(b.image_id.as_str(), b.dimension))
    };
    train.sort_by(order);
    test.sort_by(order);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(values: &[f64]) -> Vec<MosRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &mos)| MosRecord {
                image_id: format!("img{i:03}"),
                dimension: Dimension::Layout,
                mos,
                n_ratings: 3,
                outlier_count: 0,
            })
            .collect()
    }

    #[test]
    fn ten_records_split_eight_two() {
        let input = records(&[3.0; 10]);
        let (train, test) = split_train_test(&input, &CleaningConfig::default()).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn same_seed_same_split() {
        let input = records(&[1.0, 2.2, 3.4, 3.6, 4.1, 4.9, 2.5, 3.3, 1.2, 4.4]);
        let cfg = CleaningConfig::default();
        assert_eq!(split_train_test(&input, &cfg).unwrap(), split_train_test(&input, &cfg).unwrap());
    }

    #[test]
    fn stratum_of_five_splits_four_one() {
        let mut input = records(&[2.0, 2.1, 1.9, 2.2, 1.8]);
        input.extend(records(&[4.0, 4.1, 3.9, 4.2, 3.8]).into_iter().map(|mut m| {
            m.image_id = format!("x{}", m.image_id);
            m
        }));
        let (train, test) = split_train_test(&input, &CleaningConfig::default()).unwrap();
        let low_test = test.iter().filter(|m| m.mos < 3.0).count();
        let high_test = test.iter().filter(|m| m.mos > 3.0).count();
        assert_eq!((low_test, high_test), (1, 1));
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn too_few_records_rejected() {
        assert!(split_train_test(&records(&[3.0; 4]), &CleaningConfig::default()).is_err());
    }
}

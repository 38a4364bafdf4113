//! Battery-level train/val/test partitioning with nested training subsets.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::seed::derive_seed;
use crate::types::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub train_fraction: f64,
}

impl SplitSpec {
    pub fn is_disjoint(&self) -> bool {
        self.train_ids.is_disjoint(&self.val_ids)
            && self.train_ids.is_disjoint(&self.test_ids)
            && self.val_ids.is_disjoint(&self.test_ids)
    }
}

/// Per-group shares held out for test and validation (floored).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub test: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { test: 0.2, val: 0.1 }
    }
}

pub fn partition_dataset(ds: &Dataset, fraction: f64, seed: u64) -> Result<SplitSpec> {
    partition_dataset_with(ds, fraction, seed, SplitRatios::default())
}

/// Splits per `condition_tag`. Each group is shuffled with a stream keyed by
/// `(seed, tag)`; the head of the order is test, then val, and the training
/// pool is the rest. Only the training pool shrinks with `fraction`, keeping
/// its first `ceil(fraction · pool)` entries, so smaller fractions yield
/// subsets of larger ones and test/val never move.
pub fn partition_dataset_with(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
    ratios: SplitRatios,
) -> Result<SplitSpec> {
    if ds.batteries.is_empty() {
        return Err(DataError::InvalidDataset("dataset has no batteries".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "train fraction {fraction} outside (0, 1]"
        )));
    }
    let ratio_ok = |r: f64| (0.0..1.0).contains(&r);
    if !ratio_ok(ratios.test) || !ratio_ok(ratios.val) || ratios.test + ratios.val >= 1.0 {
        return Err(DataError::InvalidArgument(format!(
            "holdout ratios {ratios:?} must be in [0, 1) and sum below 1"
        )));
    }
    ds.validate()?;

    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for b in &ds.batteries {
        groups.entry(&b.condition_tag).or_default().push(&b.battery_id);
    }

    let mut spec = SplitSpec {
        train_ids: BTreeSet::new(),
        val_ids: BTreeSet::new(),
        test_ids: BTreeSet::new(),
        train_fraction: fraction,
    };
    for (tag, mut ids) in groups {
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"split", tag.as_bytes()]));
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_test = (ratios.test * n as f64).floor() as usize;
        let n_val = (ratios.val * n as f64).floor() as usize;
        let pool = &ids[n_test + n_val..];
        let keep = reduced_count(pool.len(), fraction);
        spec.test_ids.extend(ids[..n_test].iter().map(|s| s.to_string()));
        spec.val_ids.extend(ids[n_test..n_test + n_val].iter().map(|s| s.to_string()));
        spec.train_ids.extend(pool[..keep].iter().map(|s| s.to_string()));
    }
    Ok(spec)
}

/// `ceil(fraction · pool)`, guarded against products like `0.7 · 10` landing
/// a hair above an integer.
pub fn reduced_count(pool: usize, fraction: f64) -> usize {
    let raw = fraction * pool as f64;
    let c = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize;
    c.min(pool)
}

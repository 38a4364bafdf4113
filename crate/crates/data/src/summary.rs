use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::Dataset;

/// One line of the per-condition overview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition_tag: String,
    pub n_batteries: usize,
    pub total_cycles: usize,
    pub min_cycles: usize,
    pub max_cycles: usize,
    pub mean_cycles: f64,
    pub min_capacity_mah: f64,
    pub max_capacity_mah: f64,
}

/// Rows sorted by condition tag. Capacity bounds are NaN for groups whose
/// batteries have no cycles.
pub fn dataset_summary(ds: &Dataset) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, SummaryRow> = BTreeMap::new();
    for b in &ds.batteries {
        let row = groups.entry(&b.condition_tag).or_insert_with(|| SummaryRow {
            condition_tag: b.condition_tag.clone(),
            n_batteries: 0,
            total_cycles: 0,
            min_cycles: usize::MAX,
            max_cycles: 0,
            mean_cycles: 0.0,
            min_capacity_mah: f64::NAN,
            max_capacity_mah: f64::NAN,
        });
        let n = b.cycles.len();
        row.n_batteries += 1;
        row.total_cycles += n;
        row.min_cycles = row.min_cycles.min(n);
        row.max_cycles = row.max_cycles.max(n);
        for c in &b.cycles {
            let q = c.max_discharge_capacity_mah;
            row.min_capacity_mah = row.min_capacity_mah.min(q);
            row.max_capacity_mah = row.max_capacity_mah.max(q);
        }
    }
    groups
        .into_values()
        .map(|mut r| {
            r.mean_cycles = r.total_cycles as f64 / r.n_batteries as f64;
            r
        })
        .collect()
}

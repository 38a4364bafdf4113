use pimoe_data::BatterySeries;
use serde::{Deserialize, Serialize};

use crate::{PreprocessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanConfig {
    /// A cycle whose capacity differs from both neighbours by more than
    /// this is an outlier.
    pub capacity_jump_mah: f64,
    /// Relative standard deviation of current allowed in the
    /// constant-current part of the charge.
    pub current_rel_std: f64,
    /// Points within this distance of the upper cutoff count as the
    /// constant-voltage tail rather than constant current.
    pub cv_margin_v: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { capacity_jump_mah: 200.0, current_rel_std: 0.05, cv_margin_v: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    CapacityOutlier,
    ZeroChargeCapacity,
    CurrentFluctuation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removed {
    /// Index as it appeared in the input series.
    pub cycle_index: u32,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanLog {
    pub battery_id: String,
    pub removed: Vec<Removed>,
}

pub fn clean_cycles(b: &BatterySeries) -> Result<(BatterySeries, CleanLog)> {
    clean_cycles_with(b, CleanConfig::default())
}

/// Removes zero-throughput cycles, cycles with unsteady charge current and
/// isolated capacity outliers, then renumbers the survivors `1..=n`.
///
/// The outlier rule only looks at interior cycles and is repeated until
/// nothing changes, so cleaning an already-clean series is a no-op.
pub fn clean_cycles_with(b: &BatterySeries, cfg: CleanConfig) -> Result<(BatterySeries, CleanLog)> {
    if b.cycles.len() < 3 {
        return Err(PreprocessError::InsufficientData(format!(
            "{}: cleaning needs at least 3 cycles, got {}",
            b.battery_id,
            b.cycles.len()
        )));
    }
    let mut log = CleanLog { battery_id: b.battery_id.clone(), removed: Vec::new() };
    let v_cut = b.cutoff_voltage_v.1 - cfg.cv_margin_v;

    let mut kept = Vec::with_capacity(b.cycles.len());
    for c in &b.cycles {
        let reason = if c.charge_throughput_mah() <= 0.0 {
            Some(RemovalReason::ZeroChargeCapacity)
        } else if current_fluctuates(c, v_cut, cfg.current_rel_std) {
            Some(RemovalReason::CurrentFluctuation)
        } else {
            None
        };
        match reason {
            Some(reason) => log.removed.push(Removed { cycle_index: c.cycle_index, reason }),
            None => kept.push(c.clone()),
        }
    }

    loop {
        let caps: Vec<f64> = kept.iter().map(|c| c.max_discharge_capacity_mah).collect();
        let outlier: Vec<bool> = (0..caps.len())
            .map(|i| {
                i > 0
                    && i + 1 < caps.len()
                    && (caps[i] - caps[i - 1]).abs() > cfg.capacity_jump_mah
                    && (caps[i] - caps[i + 1]).abs() > cfg.capacity_jump_mah
            })
            .collect();
        if !outlier.contains(&true) {
            break;
        }
        let mut next = Vec::with_capacity(kept.len());
        for (c, out) in kept.into_iter().zip(outlier) {
            if out {
                log.removed.push(Removed { cycle_index: c.cycle_index, reason: RemovalReason::CapacityOutlier });
            } else {
                next.push(c);
            }
        }
        kept = next;
    }

    for (i, c) in kept.iter_mut().enumerate() {
        c.cycle_index = i as u32 + 1;
    }
    log.removed.sort_by_key(|r| r.cycle_index);
    Ok((BatterySeries { cycles: kept, ..b.clone() }, log))
}

fn current_fluctuates(c: &pimoe_data::CycleRecord, v_cut: f64, tol: f64) -> bool {
    let cc: Vec<f64> = c
        .charge_points
        .iter()
        .take_while(|p| p.voltage_v < v_cut)
        .map(|p| p.current_a.abs())
        .collect();
    if cc.len() < 3 {
        return false;
    }
    let n = cc.len() as f64;
    let mean = cc.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return true;
    }
    let var = cc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean > tol
}

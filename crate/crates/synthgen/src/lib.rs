//! Synthetic cycling fleets. Capacity follows an aging clock with a
//! square-root early fade, a linear middle and an exponential knee; each
//! cycle carries a constant-current charge curve from an open-circuit
//! template shifted by ohmic drop, and a two-time-constant rest curve.
//! Ground-truth stages come from the clock.

mod cell;
mod config;

pub use cell::{
    aging_rate, apparent_offset, battery_id, gen_battery, ocv, soh_at, stage_at, GeneratedBattery, CHARGE_POINTS,
    REST_MINUTES,
};
pub use config::{ChemistryProfile, ConditionSchedule, DegradationParams, NoiseLevels, SynthConfig};

use std::collections::BTreeMap;

use pimoe_data::{Dataset, StageLabels};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// A generated dataset with the per-cycle truth the generator knows.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub dataset: Dataset,
    pub stages: StageLabels,
    pub true_soh: BTreeMap<String, Vec<f64>>,
}

pub fn gen_fleet(cfg: &SynthConfig) -> Result<Fleet> {
    cfg.validate()?;
    let mut batteries = Vec::with_capacity(cfg.n_batteries);
    let mut stages = StageLabels::new();
    let mut true_soh = BTreeMap::new();
    for i in 0..cfg.n_batteries {
        let g = gen_battery(cfg, i)?;
        stages.insert(g.series.battery_id.clone(), g.stages);
        true_soh.insert(g.series.battery_id.clone(), g.true_soh);
        batteries.push(g.series);
    }
    let tag = match &cfg.schedule {
        ConditionSchedule::Fixed { .. } => "UL-like",
        ConditionSchedule::TwoPhase { .. } => "TPSL-like",
    };
    Ok(Fleet {
        dataset: Dataset { name: cfg.name.clone(), condition_tag: tag.into(), batteries },
        stages,
        true_soh,
    })
}

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// Operating condition applied during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionTriple {
    pub charge_c_rate: f64,
    pub discharge_c_rate: f64,
    pub temperature_c: f64,
}

impl ConditionTriple {
    pub fn new(charge_c_rate: f64, discharge_c_rate: f64, temperature_c: f64) -> Result<Self> {
        let c = Self {
            charge_c_rate,
            discharge_c_rate,
            temperature_c,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let rates_ok = self.charge_c_rate.is_finite()
            && self.discharge_c_rate.is_finite()
            && self.charge_c_rate > 0.0
            && self.discharge_c_rate > 0.0;
        if !rates_ok || !self.temperature_c.is_finite() {
            return Err(DataError::InvalidArgument(format!(
                "condition {self:?} needs positive C-rates and a finite temperature"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.charge_c_rate, self.discharge_c_rate, self.temperature_c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargePoint {
    pub time_s: f64,
    pub voltage_v: f64,
    pub current_a: f64,
    pub cumulative_mah: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxPoint {
    pub time_s: f64,
    pub voltage_v: f64,
}

/// One charge + rest cycle with its measured capacity and applied condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: u32,
    pub charge_points: Vec<ChargePoint>,
    pub relax_points: Vec<RelaxPoint>,
    pub max_discharge_capacity_mah: f64,
    pub condition: ConditionTriple,
}

impl CycleRecord {
    /// Charge accumulated over the recorded charge segment.
    pub fn charge_throughput_mah(&self) -> f64 {
        match (self.charge_points.first(), self.charge_points.last()) {
            (Some(a), Some(b)) => b.cumulative_mah - a.cumulative_mah,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Chemistry {
    Nca,
    Ncm,
    Ncmnca,
    Other,
}

impl fmt::Display for Chemistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chemistry::Nca => "NCA",
            Chemistry::Ncm => "NCM",
            Chemistry::Ncmnca => "NCMNCA",
            Chemistry::Other => "OTHER",
        })
    }
}

impl FromStr for Chemistry {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NCA" => Ok(Chemistry::Nca),
            "NCM" => Ok(Chemistry::Ncm),
            "NCMNCA" => Ok(Chemistry::Ncmnca),
            "OTHER" => Ok(Chemistry::Other),
            other => Err(DataError::InvalidArgument(format!("unknown chemistry `{other}`"))),
        }
    }
}

/// All recorded cycles of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySeries {
    pub battery_id: String,
    pub chemistry: Chemistry,
    pub nominal_capacity_mah: f64,
    /// `(min, max)` voltage window shared by every cycle.
    pub cutoff_voltage_v: (f64, f64),
    /// Operating-condition group this cell belongs to, e.g. `NCA-45-05-1`.
    pub condition_tag: String,
    pub cycles: Vec<CycleRecord>,
}

impl BatterySeries {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DataError::InvalidDataset(format!("{}: {msg}", self.battery_id)));
        if !(self.nominal_capacity_mah > 0.0) {
            return bad("nominal capacity must be positive".into());
        }
        let (lo, hi) = self.cutoff_voltage_v;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("bad cutoff window ({lo}, {hi})"));
        }
        for w in self.cycles.windows(2) {
            if w[1].cycle_index <= w[0].cycle_index {
                return bad(format!(
                    "cycle index {} follows {}",
                    w[1].cycle_index, w[0].cycle_index
                ));
            }
        }
        for c in &self.cycles {
            c.condition.validate()?;
            if !(c.max_discharge_capacity_mah > 0.0) {
                return bad(format!("cycle {} has non-positive capacity", c.cycle_index));
            }
        }
        Ok(())
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.max_discharge_capacity_mah).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    /// Dataset-level label; grouping for splits uses each battery's own tag.
    pub condition_tag: String,
    pub batteries: Vec<BatterySeries>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for b in &self.batteries {
            if !seen.insert(b.battery_id.as_str()) {
                return Err(DataError::InvalidDataset(format!(
                    "duplicate battery id `{}`",
                    b.battery_id
                )));
            }
            b.validate()?;
        }
        Ok(())
    }

    pub fn battery(&self, id: &str) -> Option<&BatterySeries> {
        self.batteries.iter().find(|b| b.battery_id == id)
    }

    /// Batteries whose ids are in `ids`, in dataset order.
    pub fn select<'a>(&'a self, ids: &'a BTreeSet<String>) -> impl Iterator<Item = &'a BatterySeries> {
        self.batteries.iter().filter(move |b| ids.contains(&b.battery_id))
    }
}

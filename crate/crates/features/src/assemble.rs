use pimoe_data::{ChargePoint, ChargeVector, RelaxVector};
use serde::{Deserialize, Serialize};

use crate::physics::{dv_at_dq, q_at_dv};
use crate::stats::stat_features;
use crate::{FeatureError, Result};

/// Column order of the full vector. The charge-only layout is the last six.
pub const FEATURE_NAMES: [&str; 12] = [
    "relax_max",
    "relax_mean",
    "relax_min",
    "relax_var",
    "relax_skew",
    "relax_kurt",
    "charge_max",
    "charge_mean",
    "charge_var",
    "charge_kurt",
    "q_0p05",
    "dv_200",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Full12,
    ChargeOnly6,
}

impl FeatureMode {
    pub fn len(self) -> usize {
        match self {
            FeatureMode::Full12 => 12,
            FeatureMode::ChargeOnly6 => 6,
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        &FEATURE_NAMES[12 - self.len()..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub dv_v: f64,
    pub dq_mah: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { dv_v: 0.05, dq_mah: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub values: Vec<f64>,
}

/// Builds the feature vector for one cycle. `segment` is the raw charge
/// segment behind `charge`; the relaxation vector is required in full mode
/// and rejected in charge-only mode.
pub fn assemble_features(
    charge: &ChargeVector,
    segment: &[ChargePoint],
    relax: Option<&RelaxVector>,
    mode: FeatureMode,
    params: FeatureParams,
) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(mode.len());
    match (mode, relax) {
        (FeatureMode::Full12, Some(r)) => {
            let s = stat_features(&r.values_v)?;
            values.extend([s.max, s.mean, s.min, s.var, s.skew, s.kurt]);
        }
        (FeatureMode::ChargeOnly6, None) => {}
        (m, r) => {
            return Err(FeatureError::InvalidArgument(format!(
                "mode {m:?} with relaxation {}",
                if r.is_some() { "present" } else { "absent" }
            )))
        }
    }
    let c = stat_features(charge.model_input())?;
    values.extend([c.max, c.mean, c.var, c.kurt]);
    values.push(q_at_dv(segment, charge.v_start_v, params.dv_v)?);
    values.push(dv_at_dq(segment, charge.v_start_v, params.dq_mah)?);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::InvalidArgument("non-finite feature".into()));
    }
    Ok(FeatureVector { mode, values })
}

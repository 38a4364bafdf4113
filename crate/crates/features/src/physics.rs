use pimoe_data::curve::{charge_at_voltage, monotone_cleanup, voltage_at_charge};
use pimoe_data::ChargePoint;

use crate::{FeatureError, Result};

fn start_charge(curve: &[ChargePoint], v_start: f64) -> Result<f64> {
    charge_at_voltage(curve, v_start).ok_or_else(|| {
        FeatureError::OutOfRange(format!("start voltage {v_start} V outside the charge curve"))
    })
}

/// Charge taken up while the voltage rises by `dv` from `v_start`.
pub fn q_at_dv(curve: &[ChargePoint], v_start: f64, dv: f64) -> Result<f64> {
    if !(dv >= 0.0) {
        return Err(FeatureError::InvalidArgument(format!("negative voltage rise {dv}")));
    }
    let curve = monotone_cleanup(curve);
    let q0 = start_charge(&curve, v_start)?;
    let q1 = charge_at_voltage(&curve, v_start + dv).ok_or_else(|| {
        FeatureError::OutOfRange(format!("{v_start} V + {dv} V passes the end of the curve"))
    })?;
    Ok(q1 - q0)
}

/// Voltage rise needed to take up `dq` mAh from `v_start`.
pub fn dv_at_dq(curve: &[ChargePoint], v_start: f64, dq: f64) -> Result<f64> {
    if !(dq >= 0.0) {
        return Err(FeatureError::InvalidArgument(format!("negative charge increment {dq}")));
    }
    let curve = monotone_cleanup(curve);
    let q0 = start_charge(&curve, v_start)?;
    let v1 = voltage_at_charge(&curve, q0 + dq).ok_or_else(|| {
        FeatureError::OutOfRange(format!("less than {dq} mAh remains after {v_start} V"))
    })?;
    Ok(v1 - v_start)
}

//! Charge-curve primitives: integration, monotone cleanup and the two
//! interpolating lookups `q(V)` and `V(q)`.

use serde::{Deserialize, Serialize};

use crate::types::ChargePoint;

/// Cumulative charge on a voltage grid starting at `v_start_v`.
///
/// `values_mah` holds `n + 1` grid values for `n` segments; the first is
/// always 0. The model consumes the `n` values after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeVector {
    pub values_mah: Vec<f64>,
    pub v_start_v: f64,
    pub v_end_v: f64,
}

impl ChargeVector {
    pub fn segments(&self) -> usize {
        self.values_mah.len().saturating_sub(1)
    }

    /// The `n` increments after the zero anchor.
    pub fn model_input(&self) -> &[f64] {
        &self.values_mah[1.min(self.values_mah.len())..]
    }

    pub fn voltage_step(&self) -> f64 {
        (self.v_end_v - self.v_start_v) / self.segments().max(1) as f64
    }
}

/// Rest-period voltage sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxVector {
    pub values_v: Vec<f64>,
    pub window_min: f64,
}

/// Trapezoidal `∫|I| dt` in mAh for samples in seconds and amperes.
pub fn integrate_charge(time_s: &[f64], current_a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(time_s.len());
    let mut acc = 0.0;
    for k in 0..time_s.len().min(current_a.len()) {
        if k > 0 {
            let dt = time_s[k] - time_s[k - 1];
            acc += 0.5 * (current_a[k].abs() + current_a[k - 1].abs()) * dt / 3.6;
        }
        out.push(acc);
    }
    out
}

/// Drops every point whose voltage is below the running maximum, leaving a
/// voltage sequence that never decreases.
pub fn monotone_cleanup(points: &[ChargePoint]) -> Vec<ChargePoint> {
    let mut out: Vec<ChargePoint> = Vec::with_capacity(points.len());
    for p in points {
        match out.last() {
            Some(last) if p.voltage_v < last.voltage_v => {}
            _ => out.push(*p),
        }
    }
    out
}

/// True when voltage and cumulative charge are both non-decreasing and finite.
pub fn is_monotone(points: &[ChargePoint]) -> bool {
    points.iter().all(|p| p.voltage_v.is_finite() && p.cumulative_mah.is_finite())
        && points.windows(2).all(|w| {
            w[1].voltage_v >= w[0].voltage_v && w[1].cumulative_mah >= w[0].cumulative_mah
        })
}

/// Cumulative charge where the curve first reaches `v`, linear in voltage.
/// `None` outside the recorded voltage span. Expects a monotone curve.
pub fn charge_at_voltage(points: &[ChargePoint], v: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if !(v >= first.voltage_v && v <= last.voltage_v) {
        return None;
    }
    let k = points.partition_point(|p| p.voltage_v < v);
    if k == 0 {
        return Some(first.cumulative_mah);
    }
    let (a, b) = (&points[k - 1], &points[k]);
    let frac = (v - a.voltage_v) / (b.voltage_v - a.voltage_v);
    Some(a.cumulative_mah + frac * (b.cumulative_mah - a.cumulative_mah))
}

/// Voltage where cumulative charge first reaches `q`, linear in charge.
pub fn voltage_at_charge(points: &[ChargePoint], q: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if !(q >= first.cumulative_mah && q <= last.cumulative_mah) {
        return None;
    }
    let k = points.partition_point(|p| p.cumulative_mah < q);
    if k == 0 {
        return Some(first.voltage_v);
    }
    let (a, b) = (&points[k - 1], &points[k]);
    let frac = (q - a.cumulative_mah) / (b.cumulative_mah - a.cumulative_mah);
    Some(a.voltage_v + frac * (b.voltage_v - a.voltage_v))
}

/// Piecewise-linear interpolation of `ys` over increasing `xs`.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || xs.len() != ys.len() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let k = xs.partition_point(|&t| t < x);
    if k == 0 {
        return Some(ys[0]);
    }
    let frac = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    Some(ys[k - 1] + frac * (ys[k] - ys[k - 1]))
}

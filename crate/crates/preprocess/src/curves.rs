use pimoe_data::curve::{charge_at_voltage, interp, is_monotone, monotone_cleanup};
use pimoe_data::{ChargeVector, CycleRecord, RelaxVector};

use crate::{PreprocessError, Result};

/// Cumulative charge from `v_start` sampled at `n` equal voltage steps up to
/// the end of the charge segment. Returns `n + 1` values starting at 0.
pub fn build_charge_vector(c: &CycleRecord, v_start: f64, n: usize) -> Result<ChargeVector> {
    if n == 0 {
        return Err(PreprocessError::InvalidArgument("charge vector needs n ≥ 1".into()));
    }
    let curve = monotone_cleanup(&c.charge_points);
    if curve.len() < 2 || !is_monotone(&curve) {
        return Err(PreprocessError::MalformedCycle(format!(
            "cycle {}: charge curve is not monotone after cleanup",
            c.cycle_index
        )));
    }
    let v_min = curve[0].voltage_v;
    let v_end = curve[curve.len() - 1].voltage_v;
    if !(v_start >= v_min && v_start < v_end) {
        return Err(PreprocessError::OutOfRange(format!(
            "cycle {}: start voltage {v_start} V outside [{v_min}, {v_end})",
            c.cycle_index
        )));
    }
    let q0 = charge_at_voltage(&curve, v_start).expect("start checked against the curve");
    let step = (v_end - v_start) / n as f64;
    let values_mah = (0..=n)
        .map(|i| {
            let v = if i == n { v_end } else { v_start + i as f64 * step };
            charge_at_voltage(&curve, v).expect("grid lies inside the curve") - q0
        })
        .collect();
    Ok(ChargeVector { values_mah, v_start_v: v_start, v_end_v: v_end })
}

/// `m` rest voltages on a uniform grid over `[0, window_min]` minutes after
/// the first relaxation sample, interpolated linearly in time.
pub fn sample_relaxation(c: &CycleRecord, window_min: f64, m: usize) -> Result<RelaxVector> {
    if m < 2 || !(window_min > 0.0) {
        return Err(PreprocessError::InvalidArgument(format!(
            "relaxation grid of {m} points over {window_min} min"
        )));
    }
    let (Some(first), Some(last)) = (c.relax_points.first(), c.relax_points.last()) else {
        return Err(PreprocessError::InsufficientRelaxation(format!("cycle {} has no rest data", c.cycle_index)));
    };
    let window_s = window_min * 60.0;
    let span = last.time_s - first.time_s;
    if span + 1e-9 * window_s < window_s {
        return Err(PreprocessError::InsufficientRelaxation(format!(
            "cycle {}: {:.2} min recorded, {window_min} min needed",
            c.cycle_index,
            span / 60.0
        )));
    }
    let ts: Vec<f64> = c.relax_points.iter().map(|p| p.time_s - first.time_s).collect();
    let vs: Vec<f64> = c.relax_points.iter().map(|p| p.voltage_v).collect();
    if ts.windows(2).any(|w| w[1] <= w[0]) || vs.iter().any(|v| !v.is_finite()) {
        return Err(PreprocessError::MalformedCycle(format!(
            "cycle {}: relaxation times must increase and voltages be finite",
            c.cycle_index
        )));
    }
    let values_v: Vec<f64> = (0..m)
        .map(|k| {
            let t = (window_s * k as f64 / (m - 1) as f64).min(ts[ts.len() - 1]);
            interp(&ts, &vs, t).expect("grid lies inside the record")
        })
        .collect();
    if values_v[0] < values_v[m - 1] {
        log::warn!("cycle {}: rest voltage rises over the window", c.cycle_index);
    }
    Ok(RelaxVector { values_v, window_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pimoe_data::{ChargePoint, ConditionTriple, RelaxPoint};

    fn linear_cycle() -> CycleRecord {
        CycleRecord {
            cycle_index: 1,
            charge_points: (0..=200)
                .map(|i| {
                    let v = 3.0 + i as f64 * 0.005;
                    ChargePoint { time_s: i as f64, voltage_v: v, current_a: 1.0, cumulative_mah: 1000.0 * (v - 3.0) }
                })
                .collect(),
            relax_points: (0..=40)
                .map(|k| {
                    let t = 60.0 * k as f64;
                    RelaxPoint { time_s: 100.0 + t, voltage_v: 4.2 - 0.1 * (1.0 - (-t / 600.0).exp()) }
                })
                .collect(),
            max_discharge_capacity_mah: 1000.0,
            condition: ConditionTriple::new(1.0, 1.0, 25.0).unwrap(),
        }
    }

    #[test]
    fn linear_curve_gives_even_steps() {
        let cv = build_charge_vector(&linear_cycle(), 3.0, 50).unwrap();
        assert_eq!(cv.values_mah.len(), 51);
        for (i, q) in cv.values_mah.iter().enumerate() {
            assert!((q - 20.0 * i as f64).abs() < 1e-9, "{i}: {q}");
        }
        assert_eq!(cv.model_input().len(), 50);
    }

    #[test]
    fn single_segment_tail() {
        let c = linear_cycle();
        let cv = build_charge_vector(&c, 4.0 - 0.2, 1).unwrap();
        assert_eq!(cv.values_mah.len(), 2);
        assert_eq!(cv.values_mah[0], 0.0);
        assert!((cv.values_mah[1] - 200.0).abs() < 1e-9);
    }

    #[test]
    fn start_voltage_bounds() {
        let c = linear_cycle();
        assert!(matches!(build_charge_vector(&c, 2.9, 50), Err(PreprocessError::OutOfRange(_))));
        assert!(matches!(build_charge_vector(&c, 4.0, 50), Err(PreprocessError::OutOfRange(_))));
    }

    #[test]
    fn decreasing_charge_is_malformed() {
        let mut c = linear_cycle();
        c.charge_points[50].cumulative_mah = 0.0;
        assert!(matches!(build_charge_vector(&c, 3.1, 10), Err(PreprocessError::MalformedCycle(_))));
    }

    #[test]
    fn relaxation_matches_closed_form() {
        // V(t) = 4.2 − 0.1(1 − e^{−t/10 min}) recorded every minute; the
        // grid points fall between records, so compare with the chord.
        let c = linear_cycle();
        let r = sample_relaxation(&c, 30.0, 30).unwrap();
        assert_eq!(r.values_v.len(), 30);
        let f = |t: f64| 4.2 - 0.1 * (1.0 - (-t / 600.0).exp());
        for (k, v) in r.values_v.iter().enumerate() {
            let t = 1800.0 * k as f64 / 29.0;
            let (a, b) = ((t / 60.0).floor() * 60.0, (t / 60.0).floor() * 60.0 + 60.0);
            let chord = f(a) + (t - a) / 60.0 * (f(b) - f(a));
            assert!((v - chord).abs() < 1e-12);
            // Chord error bound h²/8·max|f″| = 60²/8 · 0.1/600².
            assert!((v - f(t)).abs() <= 1.25e-4 + 1e-12);
        }
    }

    #[test]
    fn relaxation_on_grid_aligned_record_is_exact() {
        let f = |t: f64| 4.2 - 0.1 * (1.0 - (-t / 600.0).exp());
        let mut c = linear_cycle();
        let dt = 1800.0 / 29.0 / 4.0;
        c.relax_points = (0..=120).map(|j| RelaxPoint { time_s: j as f64 * dt, voltage_v: f(j as f64 * dt) }).collect();
        let r = sample_relaxation(&c, 30.0, 30).unwrap();
        for (k, v) in r.values_v.iter().enumerate() {
            assert!((v - f(1800.0 * k as f64 / 29.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn short_rest_is_rejected() {
        let mut c = linear_cycle();
        c.relax_points.truncate(20);
        assert!(matches!(sample_relaxation(&c, 30.0, 30), Err(PreprocessError::InsufficientRelaxation(_))));
        c.relax_points.clear();
        assert!(matches!(sample_relaxation(&c, 30.0, 30), Err(PreprocessError::InsufficientRelaxation(_))));
    }

    #[test]
    fn flat_rest_gives_flat_vector() {
        let mut c = linear_cycle();
        for p in &mut c.relax_points {
            p.voltage_v = 4.1;
        }
        let r = sample_relaxation(&c, 30.0, 30).unwrap();
        assert!(r.values_v.iter().all(|&v| v == 4.1));
    }
}

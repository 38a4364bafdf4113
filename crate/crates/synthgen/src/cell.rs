use pimoe_data::curve::integrate_charge;
use pimoe_data::{
    derive_seed, BatterySeries, ChargePoint, ConditionTriple, CycleRecord, RelaxPoint, Stage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::config::{ConditionSchedule, DegradationParams, SynthConfig};
use crate::{Result, SynthError};

/// Recorded points on the constant-current charge.
pub const CHARGE_POINTS: usize = 120;
/// Rest record: one sample per minute for 35 minutes.
pub const REST_MINUTES: usize = 35;
const OCV_DELTA: f64 = 0.03;
/// Ohmic resistance times nominal capacity, Ω·mAh.
const RESISTANCE_MAH_OHM: f64 = 90.0;
const POLARIZATION_SHARE: f64 = 0.5;
const RELAX_FAST_S: f64 = 60.0;
const RELAX_SLOW_S: f64 = 600.0;
const RELAX_FAST_WEIGHT: f64 = 0.6;
const CAPACITY_SPREAD: f64 = 0.01;
const RESISTANCE_SPREAD: f64 = 0.05;

/// Open-circuit voltage at state of charge `x ∈ [0, 1]`.
pub fn ocv(x: f64) -> f64 {
    3.25 + 0.8 * x + 0.05 * ((x + OCV_DELTA) / (1.0 + OCV_DELTA - x)).ln()
}

/// True state of health at aging clock `tau`.
pub fn soh_at(d: &DegradationParams, tau: f64) -> f64 {
    let knee = ((tau - d.knee_tau).max(0.0) / d.knee_width).exp() - 1.0;
    1.0 - d.sqrt_coeff * tau.sqrt() - d.linear_coeff * tau - d.knee_coeff * knee
}

/// Clock advance per cycle under `c` before cell variability.
pub fn aging_rate(d: &DegradationParams, c: &ConditionTriple) -> f64 {
    d.base_rate
        * (c.charge_c_rate / d.ref_charge_c).powf(d.charge_exponent)
        * c.discharge_c_rate.powf(d.discharge_exponent)
        * (d.temp_coeff * (c.temperature_c - 25.0)).exp()
}

/// Shift of the measured capacity (fraction of nominal) caused by the rates
/// of the cycle itself.
pub fn apparent_offset(d: &DegradationParams, c: &ConditionTriple) -> f64 {
    -d.charge_offset_per_c * (c.charge_c_rate - d.ref_charge_c) - d.discharge_offset_per_c * (c.discharge_c_rate - 1.0)
}

pub fn stage_at(d: &DegradationParams, tau: f64) -> Stage {
    if tau < d.early_until_tau {
        Stage::Early
    } else if tau < d.knee_tau {
        Stage::Mid
    } else {
        Stage::Late
    }
}

fn fmt_rate(v: f64) -> String {
    let s = format!("{v}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

/// Per-cell draws that make cells in one condition group differ.
struct CellTraits {
    rate_mult: f64,
    capacity_scale: f64,
    resistance_ohm: f64,
}

struct Schedule<'a> {
    kind: &'a ConditionSchedule,
    fixed: Option<ConditionTriple>,
    current_charge: f64,
}

impl Schedule<'_> {
    fn condition(&mut self, cycle0: usize, rng: &mut ChaCha8Rng) -> ConditionTriple {
        match self.kind {
            ConditionSchedule::Fixed { .. } => self.fixed.expect("fixed schedule"),
            ConditionSchedule::TwoPhase {
                phase1,
                phase1_cycles,
                switch_every,
                charge_choices,
                discharge_c,
                temperature_c,
            } => {
                if cycle0 < *phase1_cycles {
                    return *phase1;
                }
                if (cycle0 - phase1_cycles) % switch_every == 0 {
                    self.current_charge = charge_choices[rng.random_range(0..charge_choices.len())];
                }
                ConditionTriple {
                    charge_c_rate: self.current_charge,
                    discharge_c_rate: *discharge_c,
                    temperature_c: *temperature_c,
                }
            }
        }
    }
}

fn condition_tag(cfg: &SynthConfig, index: usize) -> String {
    match &cfg.schedule {
        ConditionSchedule::Fixed { conditions } => {
            let c = conditions[index % conditions.len()];
            format!(
                "{}-{}-{}-{}",
                cfg.profile.chemistry,
                fmt_rate(c.temperature_c),
                fmt_rate(c.charge_c_rate),
                fmt_rate(c.discharge_c_rate)
            )
        }
        ConditionSchedule::TwoPhase { .. } => "TPSL-Random".into(),
    }
}

pub fn battery_id(index: usize) -> String {
    format!("B{index:03}")
}

/// A generated cell with its hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBattery {
    pub series: BatterySeries,
    pub stages: Vec<Stage>,
    pub true_soh: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Generates cell `index` of the fleet. Output depends only on `(cfg, index)`.
pub fn gen_battery(cfg: &SynthConfig, index: usize) -> Result<GeneratedBattery> {
    cfg.validate()?;
    let id = battery_id(index);
    let d = &cfg.degradation;
    let p = &cfg.profile;
    let mut trait_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"cell", id.as_bytes()]));
    let mut sched_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"schedule", id.as_bytes()]));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"noise", id.as_bytes()]));
    let mut lognormal = |s: f64| (s * trait_rng.sample::<f64, _>(StandardNormal)).exp();
    let traits = CellTraits {
        rate_mult: lognormal(cfg.variability_sigma),
        capacity_scale: lognormal(CAPACITY_SPREAD),
        resistance_ohm: RESISTANCE_MAH_OHM / p.nominal_capacity_mah * lognormal(RESISTANCE_SPREAD),
    };
    let v_noise = Normal::new(0.0, cfg.noise.voltage_v).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let q_noise = Normal::new(0.0, cfg.noise.capacity_mah).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;

    let mut schedule = Schedule {
        kind: &cfg.schedule,
        fixed: match &cfg.schedule {
            ConditionSchedule::Fixed { conditions } => Some(conditions[index % conditions.len()]),
            ConditionSchedule::TwoPhase { .. } => None,
        },
        current_charge: 0.0,
    };

    let (v_min, v_max) = p.cutoff_voltage_v;
    let mut tau = 0.0;
    let mut out = GeneratedBattery {
        series: BatterySeries {
            battery_id: id,
            chemistry: p.chemistry,
            nominal_capacity_mah: p.nominal_capacity_mah,
            cutoff_voltage_v: p.cutoff_voltage_v,
            condition_tag: condition_tag(cfg, index),
            cycles: Vec::new(),
        },
        stages: Vec::new(),
        true_soh: Vec::new(),
        tau: Vec::new(),
    };
    for k in 0..d.max_cycles {
        let cond = schedule.condition(k, &mut sched_rng);
        tau += aging_rate(d, &cond) * traits.rate_mult;
        let soh = soh_at(d, tau);
        if soh < d.end_of_life_soh {
            break;
        }
        let q_cell = p.nominal_capacity_mah * soh * traits.capacity_scale;
        let r = traits.resistance_ohm * (1.0 + d.resistance_growth * tau);
        let amps = cond.charge_c_rate * p.nominal_capacity_mah / 1000.0;
        let ir = amps * r;
        if ocv(0.0) + ir >= v_max || ocv(0.0) + ir <= v_min {
            return Err(SynthError::InvalidConfig(format!(
                "charge at {}C starts at {:.3} V, outside the cutoff window",
                cond.charge_c_rate,
                ocv(0.0) + ir
            )));
        }
        let x_end = solve_ocv(v_max - ir);

        let times: Vec<f64> =
            (0..=CHARGE_POINTS).map(|j| x_end * j as f64 / CHARGE_POINTS as f64 * q_cell * 3.6 / amps).collect();
        let currents = vec![amps; times.len()];
        let cumulative = integrate_charge(&times, &currents);
        let charge_points: Vec<ChargePoint> = (0..=CHARGE_POINTS)
            .map(|j| {
                let x = x_end * j as f64 / CHARGE_POINTS as f64;
                let noise = if j == CHARGE_POINTS { 0.0 } else { v_noise.sample(&mut noise_rng) };
                ChargePoint {
                    time_s: times[j],
                    voltage_v: (ocv(x) + ir + noise).min(v_max),
                    current_a: amps,
                    cumulative_mah: cumulative[j],
                }
            })
            .collect();
        let t_end = *times.last().expect("charge points");
        let polarization = amps * r * POLARIZATION_SHARE;
        let relax_points = (0..=REST_MINUTES)
            .map(|m| {
                let t = 60.0 * m as f64;
                let decay = RELAX_FAST_WEIGHT * (-t / RELAX_FAST_S).exp()
                    + (1.0 - RELAX_FAST_WEIGHT) * (-t / RELAX_SLOW_S).exp();
                RelaxPoint {
                    time_s: t_end + t,
                    voltage_v: ocv(x_end) + polarization * decay + v_noise.sample(&mut noise_rng),
                }
            })
            .collect();
        let measured = p.nominal_capacity_mah * (soh * traits.capacity_scale + apparent_offset(d, &cond))
            + q_noise.sample(&mut noise_rng);
        out.series.cycles.push(CycleRecord {
            cycle_index: k as u32 + 1,
            charge_points,
            relax_points,
            max_discharge_capacity_mah: measured,
            condition: cond,
        });
        out.stages.push(stage_at(d, tau));
        out.true_soh.push(soh);
        out.tau.push(tau);
    }
    if out.series.cycles.len() < 3 {
        return Err(SynthError::InvalidConfig(format!(
            "{} reached end of life after {} cycles",
            out.series.battery_id,
            out.series.cycles.len()
        )));
    }
    Ok(out)
}

/// State of charge where the open-circuit voltage reaches `v`, by bisection.
fn solve_ocv(v: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-6);
    if ocv(hi) <= v {
        return hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ocv(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

use pimoe_data::{Chemistry, ConditionTriple};
use serde::{Deserialize, Serialize};

use crate::{Result, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemistryProfile {
    pub chemistry: Chemistry,
    pub nominal_capacity_mah: f64,
    pub cutoff_voltage_v: (f64, f64),
}

/// Capacity fade as a function of an aging clock `τ` that advances by a
/// condition-dependent rate every cycle:
/// `SOH(τ) = 1 − a√τ − bτ − c·(exp(max(0, τ − knee)/width) − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationParams {
    /// Early film-growth term `a`.
    pub sqrt_coeff: f64,
    /// Steady thickening term `b`.
    pub linear_coeff: f64,
    /// Accelerated-fade amplitude `c`.
    pub knee_coeff: f64,
    pub knee_tau: f64,
    pub knee_width: f64,
    /// Stage boundary between early and mid, in `τ`.
    pub early_until_tau: f64,
    /// Aging rate at the reference condition.
    pub base_rate: f64,
    pub ref_charge_c: f64,
    pub charge_exponent: f64,
    pub discharge_exponent: f64,
    /// Per °C above 25.
    pub temp_coeff: f64,
    /// Measured capacity loss per C of charge rate above the reference.
    pub charge_offset_per_c: f64,
    /// Measured capacity loss per C of discharge rate above 1C.
    pub discharge_offset_per_c: f64,
    /// Ohmic resistance growth per unit `τ`.
    pub resistance_growth: f64,
    /// Generation stops once true SOH falls below this.
    pub end_of_life_soh: f64,
    pub max_cycles: usize,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            sqrt_coeff: 0.008,
            linear_coeff: 0.0004,
            knee_coeff: 0.015,
            knee_tau: 180.0,
            knee_width: 50.0,
            early_until_tau: 100.0,
            base_rate: 0.8,
            ref_charge_c: 1.0,
            charge_exponent: 0.4,
            discharge_exponent: 0.3,
            temp_coeff: 0.015,
            charge_offset_per_c: 0.012,
            discharge_offset_per_c: 0.005,
            resistance_growth: 0.002,
            end_of_life_soh: 0.6,
            max_cycles: 1500,
        }
    }
}

/// How conditions evolve over a cell's life.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionSchedule {
    /// Cell `i` runs `conditions[i % len]` for its whole life.
    Fixed { conditions: Vec<ConditionTriple> },
    /// A fixed first phase, then a charge rate redrawn uniformly from
    /// `charge_choices` every `switch_every` cycles at a fixed discharge
    /// rate.
    TwoPhase {
        phase1: ConditionTriple,
        phase1_cycles: usize,
        switch_every: usize,
        charge_choices: Vec<f64>,
        discharge_c: f64,
        temperature_c: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseLevels {
    /// Standard deviation of measured capacity, mAh.
    pub capacity_mah: f64,
    /// Standard deviation of recorded voltages, V.
    pub voltage_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub n_batteries: usize,
    pub profile: ChemistryProfile,
    #[serde(default)]
    pub degradation: DegradationParams,
    pub schedule: ConditionSchedule,
    /// Log-normal sigma of the per-cell aging-rate multiplier.
    #[serde(default)]
    pub variability_sigma: f64,
    #[serde(default)]
    pub noise: NoiseLevels,
    pub seed: u64,
}

impl SynthConfig {
    /// Uniform-life fleet: six constant conditions across charge rate and
    /// temperature at 1C discharge.
    pub fn ul_like(n_batteries: usize, seed: u64) -> Self {
        let c = |ch, t| ConditionTriple { charge_c_rate: ch, discharge_c_rate: 1.0, temperature_c: t };
        Self {
            name: "synthetic-ul".into(),
            n_batteries,
            profile: ChemistryProfile {
                chemistry: Chemistry::Ncm,
                nominal_capacity_mah: 3500.0,
                cutoff_voltage_v: (2.5, 4.2),
            },
            degradation: DegradationParams::default(),
            schedule: ConditionSchedule::Fixed {
                conditions: vec![c(0.5, 25.0), c(1.0, 25.0), c(2.0, 25.0), c(1.0, 35.0), c(0.5, 45.0), c(1.0, 45.0)],
            },
            variability_sigma: 0.08,
            noise: NoiseLevels::default(),
            seed,
        }
    }

    /// Two-phase second-life fleet: 20 cycles at 0.5C/2C, then a random
    /// 1C/2C/3C charge every 5 cycles with 3C discharge.
    pub fn tpsl_like(n_batteries: usize, seed: u64) -> Self {
        Self {
            name: "synthetic-tpsl".into(),
            n_batteries,
            profile: ChemistryProfile {
                chemistry: Chemistry::Ncm,
                nominal_capacity_mah: 2400.0,
                cutoff_voltage_v: (3.0, 4.2),
            },
            degradation: DegradationParams { base_rate: 0.7, charge_offset_per_c: 0.015, ..DegradationParams::default() },
            schedule: ConditionSchedule::TwoPhase {
                phase1: ConditionTriple { charge_c_rate: 0.5, discharge_c_rate: 2.0, temperature_c: 25.0 },
                phase1_cycles: 20,
                switch_every: 5,
                charge_choices: vec![1.0, 2.0, 3.0],
                discharge_c: 3.0,
                temperature_c: 25.0,
            },
            variability_sigma: 0.08,
            noise: NoiseLevels::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let d = &self.degradation;
        let rates = [
            d.sqrt_coeff,
            d.linear_coeff,
            d.knee_coeff,
            d.base_rate,
            d.resistance_growth,
            d.charge_offset_per_c,
            d.discharge_offset_per_c,
            self.variability_sigma,
            self.noise.capacity_mah,
            self.noise.voltage_v,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("rates, offsets and noise levels must be finite and ≥ 0".into());
        }
        if !(d.knee_width > 0.0 && d.knee_tau > 0.0 && d.early_until_tau > 0.0 && d.early_until_tau < d.knee_tau) {
            return bad(format!("stage boundaries early<{} knee {} width {}", d.early_until_tau, d.knee_tau, d.knee_width));
        }
        if !(d.end_of_life_soh > 0.0 && d.end_of_life_soh < 1.0) || d.max_cycles < 3 || d.ref_charge_c <= 0.0 {
            return bad("end-of-life SOH must lie in (0, 1), at least 3 cycles, positive reference rate".into());
        }
        let p = &self.profile;
        if !(p.nominal_capacity_mah > 0.0 && p.cutoff_voltage_v.0 < p.cutoff_voltage_v.1) {
            return bad("profile needs positive capacity and an ordered cutoff window".into());
        }
        match &self.schedule {
            ConditionSchedule::Fixed { conditions } => {
                if conditions.is_empty() {
                    return bad("fixed schedule without conditions".into());
                }
                for c in conditions {
                    c.validate().map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
                }
            }
            ConditionSchedule::TwoPhase { phase1, switch_every, charge_choices, discharge_c, temperature_c, .. } => {
                phase1.validate().map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
                if *switch_every == 0 || charge_choices.is_empty() {
                    return bad("two-phase schedule needs a switch period and charge choices".into());
                }
                for &c in charge_choices {
                    ConditionTriple::new(c, *discharge_c, *temperature_c)
                        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

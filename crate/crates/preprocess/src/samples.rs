use pimoe_data::curve::{monotone_cleanup, voltage_at_charge};
use pimoe_data::{derive_seed, BatterySeries, ChargeVector, ConditionTriple, CycleRecord};
use pimoe_features::{assemble_features, FeatureMode, FeatureParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{build_charge_vector, sample_relaxation};
use crate::{PreprocessError, Result};

/// How the start of the partial charge curve is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VStartPolicy {
    Fixed { v: f64 },
    /// Start at a state of charge drawn uniformly from `[soc_min, soc_max]`,
    /// located on the cycle's own charge curve. Each sample draws from a
    /// stream keyed by `(seed, battery, cycle)`.
    RandomSoc { seed: u64, soc_min: f64, soc_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub horizon: usize,
    pub n_q: usize,
    pub v_start: VStartPolicy,
    pub feature_mode: FeatureMode,
    pub feature_params: FeatureParams,
    pub relax_window_min: f64,
    pub relax_points: usize,
    /// Capacity points kept before and including the anchor.
    pub history_len: usize,
    /// Take every `anchor_stride`-th anchor.
    pub anchor_stride: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            n_q: 50,
            v_start: VStartPolicy::Fixed { v: 3.6 },
            feature_mode: FeatureMode::Full12,
            feature_params: FeatureParams::default(),
            relax_window_min: 30.0,
            relax_points: 30,
            history_len: 10,
            anchor_stride: 1,
        }
    }
}

/// One anchor cycle's inputs and the trajectory that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub battery_id: String,
    pub anchor_cycle: u32,
    pub nominal_mah: f64,
    pub q: ChargeVector,
    pub features: Vec<f64>,
    /// Conditions applied in the `L` cycles after the anchor.
    pub conditions: Vec<ConditionTriple>,
    /// Measured capacities of those `L` cycles.
    pub target_mah: Vec<f64>,
    /// Capacities up to and including the anchor; empty when the anchor is
    /// too early for a full history window.
    pub history_mah: Vec<f64>,
}

impl Sample {
    pub fn horizon(&self) -> usize {
        self.target_mah.len()
    }

    pub fn target_soh(&self) -> Vec<f64> {
        self.target_mah.iter().map(|q| q / self.nominal_mah).collect()
    }
}

fn pick_v_start(b: &BatterySeries, c: &CycleRecord, policy: VStartPolicy) -> Result<f64> {
    match policy {
        VStartPolicy::Fixed { v } => Ok(v),
        VStartPolicy::RandomSoc { seed, soc_min, soc_max } => {
            if !(0.0..1.0).contains(&soc_min) || !(soc_min..1.0).contains(&soc_max) {
                return Err(PreprocessError::InvalidArgument(format!(
                    "SOC range [{soc_min}, {soc_max}]"
                )));
            }
            let s = derive_seed(seed, &[b.battery_id.as_bytes(), &c.cycle_index.to_le_bytes()]);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let soc = if soc_max > soc_min { rng.random_range(soc_min..soc_max) } else { soc_min };
            let curve = monotone_cleanup(&c.charge_points);
            let (Some(a), Some(z)) = (curve.first(), curve.last()) else {
                return Err(PreprocessError::MalformedCycle(format!("cycle {} has no charge data", c.cycle_index)));
            };
            let q = a.cumulative_mah + soc * (z.cumulative_mah - a.cumulative_mah);
            voltage_at_charge(&curve, q).ok_or_else(|| {
                PreprocessError::MalformedCycle(format!("cycle {}: SOC lookup failed", c.cycle_index))
            })
        }
    }
}

/// Charge vector and raw features for one cycle of `b`, used both for
/// training anchors and for inference on a single field cycle.
pub fn cycle_sample(b: &BatterySeries, c: &CycleRecord, cfg: &SampleConfig) -> Result<(ChargeVector, Vec<f64>)> {
    let v_start = pick_v_start(b, c, cfg.v_start)?;
    let q = build_charge_vector(c, v_start, cfg.n_q)?;
    let relax = match cfg.feature_mode {
        FeatureMode::Full12 => Some(sample_relaxation(c, cfg.relax_window_min, cfg.relax_points)?),
        FeatureMode::ChargeOnly6 => None,
    };
    let f = assemble_features(&q, &c.charge_points, relax.as_ref(), cfg.feature_mode, cfg.feature_params)?;
    Ok((q, f.values))
}

/// Sliding-window samples: anchor positions `t = 1..=N-L` (every
/// `anchor_stride`-th), each targeting cycles `t+1..=t+L`.
pub fn build_samples(b: &BatterySeries, cfg: &SampleConfig) -> Result<Vec<Sample>> {
    let n = b.cycles.len();
    let l = cfg.horizon;
    if l == 0 || cfg.anchor_stride == 0 {
        return Err(PreprocessError::InvalidArgument("horizon and anchor stride must be ≥ 1".into()));
    }
    if n <= l {
        return Err(PreprocessError::HorizonTooLong { horizon: l, cycles: n });
    }
    let caps = b.capacities();
    let mut out = Vec::with_capacity((n - l).div_ceil(cfg.anchor_stride));
    for t in (1..=n - l).step_by(cfg.anchor_stride) {
        let anchor = &b.cycles[t - 1];
        let (q, features) = cycle_sample(b, anchor, cfg)?;
        let future = &b.cycles[t..t + l];
        let history_mah = if cfg.history_len > 0 && t >= cfg.history_len {
            caps[t - cfg.history_len..t].to_vec()
        } else {
            Vec::new()
        };
        out.push(Sample {
            battery_id: b.battery_id.clone(),
            anchor_cycle: anchor.cycle_index,
            nominal_mah: b.nominal_capacity_mah,
            q,
            features,
            conditions: future.iter().map(|c| c.condition).collect(),
            target_mah: future.iter().map(|c| c.max_discharge_capacity_mah).collect(),
            history_mah,
        });
    }
    Ok(out)
}

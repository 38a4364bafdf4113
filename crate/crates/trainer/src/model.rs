use diffkernel::ParamSet;
use pimoe_amdp::{amdp_trend, init_amdp, init_linear_trend, linear_trend, GateOutput};
use pimoe_data::{derive_seed, StageMap};
use pimoe_fornn::{build_fornn_input, init_fornn, rollout, ConditionScaler};
use pimoe_preprocess::{fit_norm, NormStats, Sample, SampleConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{TrainConfig, Variant};
use crate::train::EpochStats;
use crate::{Result, TrainError};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Everything needed to turn a raw sample into a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub version: u32,
    pub config: TrainConfig,
    pub samples: SampleConfig,
    pub params: ParamSet,
    pub norm: NormStats,
    pub scaler: ConditionScaler,
    pub stage_map: Option<StageMap>,
    pub history: Vec<EpochStats>,
}

/// A sample reduced to model inputs: scaled router and expert vectors,
/// scaled per-cycle conditions and the target in SOH.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub router_in: Vec<f64>,
    pub expert_in: Vec<f64>,
    pub conds: Vec<[f64; 3]>,
    pub target: Vec<f64>,
}

impl ModelState {
    /// Fresh model whose scaling statistics come from `train` alone.
    pub fn init(config: TrainConfig, samples: SampleConfig, train: &[Sample]) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(TrainError::InvalidDataset("no training samples".into()));
        }
        if samples.horizon != config.horizon {
            return Err(TrainError::InvalidConfig(format!(
                "sample horizon {} vs model horizon {}",
                samples.horizon, config.horizon
            )));
        }
        if let Some(s) = train.iter().find(|s| s.horizon() != config.horizon) {
            return Err(TrainError::InvalidDataset(format!(
                "sample {}@{} has horizon {}",
                s.battery_id,
                s.anchor_cycle,
                s.horizon()
            )));
        }
        let norm = fit_norm(train)?;
        let scaler = ConditionScaler::fit(train.iter().flat_map(|s| &s.conditions))?;
        let mut state = Self {
            version: MODEL_FORMAT_VERSION,
            config,
            samples,
            params: ParamSet::new(),
            norm,
            scaler,
            stage_map: None,
            history: Vec::new(),
        };
        let targets: Vec<f64> = train.iter().flat_map(|s| s.target_soh()).collect();
        let head_bias = targets.iter().sum::<f64>() / targets.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(state.config.seed, &[b"init"]));
        let (router_in, expert_in, l) = (state.router_width(), state.expert_width(), state.config.horizon);
        let cfg = &state.config;
        let mut params = ParamSet::new();
        if cfg.variant.has_router() {
            init_amdp(&mut params, router_in, expert_in, l, &cfg.amdp, &mut rng)?;
        } else {
            init_linear_trend(&mut params, expert_in, l, &mut rng);
        }
        init_fornn(&mut params, &cfg.effective_fornn(), head_bias, &mut rng);
        state.params = params;
        Ok(state)
    }

    pub fn router_width(&self) -> usize {
        match self.config.variant {
            Variant::HistoryMode => self.config.history_window,
            _ => self.norm.min.len(),
        }
    }

    pub fn expert_width(&self) -> usize {
        match self.config.variant {
            Variant::HistoryMode => self.config.history_window,
            _ => self.samples.n_q,
        }
    }

    /// Whether the sample carries what this model's inputs need.
    pub fn accepts(&self, s: &Sample) -> bool {
        match self.config.variant {
            Variant::HistoryMode => s.history_mah.len() >= self.config.history_window,
            _ => true,
        }
    }

    pub fn prepare(&self, s: &Sample) -> Result<Prepared> {
        if s.features.len() != self.norm.min.len() {
            return Err(TrainError::ModelContract(format!(
                "{} features for a model fitted on {}",
                s.features.len(),
                self.norm.min.len()
            )));
        }
        let q = s.q.model_input();
        if q.len() != self.samples.n_q {
            return Err(TrainError::ModelContract(format!(
                "charge vector of {} for a model expecting {}",
                q.len(),
                self.samples.n_q
            )));
        }
        let (router_in, expert_in) = match self.config.variant {
            Variant::HistoryMode => {
                let w = self.config.history_window;
                if s.history_mah.len() < w {
                    return Err(TrainError::ModelContract(format!(
                        "{}@{} has {} history points, model reads {w}",
                        s.battery_id,
                        s.anchor_cycle,
                        s.history_mah.len()
                    )));
                }
                let h: Vec<f64> = s.history_mah[s.history_mah.len() - w..].iter().map(|c| c / s.nominal_mah).collect();
                (h.clone(), h)
            }
            _ => (self.norm.apply(&s.features)?, q.iter().map(|v| v / s.nominal_mah).collect()),
        };
        Ok(Prepared {
            router_in,
            expert_in,
            conds: s.conditions.iter().map(|c| self.scaler.apply(c)).collect(),
            target: s.target_soh(),
        })
    }

    /// Noise-free trend and, when the variant has one, the gate.
    pub fn trend(&self, p: &Prepared) -> Result<(Vec<f64>, Option<GateOutput>)> {
        if self.config.variant.has_router() {
            let (t, g) = amdp_trend::<ChaCha8Rng>(&p.expert_in, &p.router_in, &self.params, &self.config.amdp, None)?;
            Ok((t, Some(g)))
        } else {
            Ok((linear_trend(&self.params, &p.expert_in)?, None))
        }
    }

    /// Decodes the first `horizon` steps. The decoder is causal, so this is
    /// a prefix of the full-length trajectory.
    pub fn decode(&self, p: &Prepared, horizon: usize) -> Result<Vec<f64>> {
        if horizon == 0 || horizon > self.config.horizon {
            return Err(TrainError::ModelContract(format!(
                "horizon {horizon} outside 1..={}",
                self.config.horizon
            )));
        }
        if p.conds.len() < horizon {
            return Err(TrainError::ModelContract(format!(
                "{} planned conditions for a {horizon}-cycle forecast",
                p.conds.len()
            )));
        }
        let (trend, _) = self.trend(p)?;
        let conds = self.config.effective_fornn().use_conditions.then_some(&p.conds[..horizon]);
        let input = build_fornn_input(&trend[..horizon], conds)?;
        Ok(rollout(&input, &self.params)?)
    }
}

/// Full-horizon SOH trajectory for one sample.
pub fn predict_trajectory(sample: &Sample, model: &ModelState) -> Result<Vec<f64>> {
    predict_with_horizon(sample, model, model.config.horizon)
}

pub fn predict_with_horizon(sample: &Sample, model: &ModelState, horizon: usize) -> Result<Vec<f64>> {
    model.decode(&model.prepare(sample)?, horizon)
}

/// Noise-free gate of every sample.
pub fn export_gates(model: &ModelState, samples: &[Sample]) -> Result<Vec<GateOutput>> {
    if !model.config.variant.has_router() {
        return Err(TrainError::ModelContract("the linear variant has no router".into()));
    }
    samples
        .iter()
        .map(|s| Ok(model.trend(&model.prepare(s)?)?.1.expect("router variant")))
        .collect()
}

/// Trend vectors, each min-max scaled to `[0, 1]`; a flat trend maps to 0.5.
pub fn export_trend_embeddings(model: &ModelState, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| {
            let (t, _) = model.trend(&model.prepare(s)?)?;
            let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 }).collect())
        })
        .collect()
}

use diffkernel::func::relu;
use diffkernel::{affine, glorot_uniform, ParamSet, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gate::{gate_weights, router_logits, GateOutput};
use crate::{AmdpError, Result};

pub const W_GATE: &str = "router.w_gate";
pub const W_NOISE: &str = "router.w_noise";
pub const LINEAR_TREND: &str = "linear_trend";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmdpConfig {
    pub experts: usize,
    pub top_k: usize,
    pub expert_hidden: usize,
    pub noise_in_training: bool,
    pub double_softmax: bool,
}

impl Default for AmdpConfig {
    fn default() -> Self {
        Self { experts: 5, top_k: 2, expert_hidden: 64, noise_in_training: true, double_softmax: false }
    }
}

impl AmdpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experts == 0 || self.top_k == 0 || self.top_k > self.experts || self.expert_hidden == 0 {
            return Err(AmdpError::InvalidArgument(format!(
                "{} experts, top-{}, hidden {}",
                self.experts, self.top_k, self.expert_hidden
            )));
        }
        Ok(())
    }

    pub fn softmax_passes(&self) -> usize {
        if self.double_softmax {
            2
        } else {
            1
        }
    }
}

/// `(w1, b1, w2, b2)` parameter names of expert `j`.
pub fn expert_names(j: usize) -> [String; 4] {
    ["w1", "b1", "w2", "b2"].map(|p| format!("expert.{j}.{p}"))
}

/// Registers router and expert weights. The router has no bias; experts are
/// `input → hidden → horizon` with a ReLU in between.
pub fn init_amdp<R: Rng + ?Sized>(
    params: &mut ParamSet,
    router_in: usize,
    expert_in: usize,
    horizon: usize,
    cfg: &AmdpConfig,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let e = cfg.experts;
    params.insert(W_GATE, glorot_uniform(router_in, e, router_in, e, rng));
    params.insert(W_NOISE, glorot_uniform(router_in, e, router_in, e, rng));
    for j in 0..e {
        let [w1, b1, w2, b2] = expert_names(j);
        let h = cfg.expert_hidden;
        params.insert(w1, glorot_uniform(expert_in, h, expert_in, h, rng));
        params.insert(b1, Tensor::zeros(&[h]));
        params.insert(w2, glorot_uniform(h, horizon, h, horizon, rng));
        params.insert(b2, Tensor::zeros(&[horizon]));
    }
    Ok(())
}

pub fn init_linear_trend<R: Rng + ?Sized>(params: &mut ParamSet, input: usize, horizon: usize, rng: &mut R) {
    params.add_affine(LINEAR_TREND, input, horizon, rng);
}

fn row(x: &[f64]) -> Result<Tensor> {
    Ok(Tensor::new(vec![1, x.len()], x.to_vec())?)
}

/// Output of expert `j` for one input vector.
pub fn expert_forward(params: &ParamSet, j: usize, input: &[f64]) -> Result<Vec<f64>> {
    let [w1, b1, w2, b2] = expert_names(j);
    let h = affine(&row(input)?, params.get(&w1)?, params.get(&b1)?)?.map(relu);
    Ok(affine(&h, params.get(&w2)?, params.get(&b2)?)?.into_data())
}

/// Trend for one sample: route on `router_in`, run the selected experts on
/// `expert_in`, and sum their outputs weighted by the gate. Noise is drawn
/// only when `noise` is given.
pub fn amdp_trend<R: Rng + ?Sized>(
    expert_in: &[f64],
    router_in: &[f64],
    params: &ParamSet,
    cfg: &AmdpConfig,
    noise: Option<&mut R>,
) -> Result<(Vec<f64>, GateOutput)> {
    cfg.validate()?;
    let (logits, psi) = router_logits(router_in, params.get(W_GATE)?, params.get(W_NOISE)?, noise)?;
    let mut gate = gate_weights(&logits, cfg.top_k, cfg.double_softmax)?;
    gate.noise = psi;
    let mut trend: Option<Vec<f64>> = None;
    for &j in &gate.selected {
        let y = expert_forward(params, j, expert_in)?;
        let w = gate.weights[j];
        match trend.as_mut() {
            None => trend = Some(y.iter().map(|v| v * w).collect()),
            Some(t) => t.iter_mut().zip(&y).for_each(|(a, b)| *a += b * w),
        }
    }
    Ok((trend.expect("top-k selects at least one expert"), gate))
}

/// Single affine map standing in for the whole mixture.
pub fn linear_trend(params: &ParamSet, expert_in: &[f64]) -> Result<Vec<f64>> {
    let w = params.get(&format!("{LINEAR_TREND}.w"))?;
    let b = params.get(&format!("{LINEAR_TREND}.b"))?;
    Ok(affine(&row(expert_in)?, w, b)?.into_data())
}

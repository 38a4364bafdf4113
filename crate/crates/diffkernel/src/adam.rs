//! Adam with bias correction and optional decoupled weight decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// Applies one update using the gradients stored in `params`.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) {
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.value.shape()));
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.value.shape()));
        let grads = p.grad.data();
        for (((w, &g), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, g: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::vector(vec![w]));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::vector(vec![g]));
        ps.set_grads(&grads).unwrap();
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single(2.5, 0.0);
        let mut st = AdamState::new(AdamConfig::default());
        for _ in 0..10 {
            adam_step(&mut ps, &mut st);
        }
        assert_eq!(ps.get("w").unwrap().data(), &[2.5]);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut ps = single(-1.0, 3.0);
        let mut st = AdamState::new(AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        });
        adam_step(&mut ps, &mut st);
        assert_eq!(ps.get("w").unwrap().data(), &[-1.0]);
    }

    #[test]
    fn scalar_oracle_over_several_steps() {
        let cfg = AdamConfig::default();
        let mut ps = single(1.0, 1.0);
        let mut st = AdamState::new(cfg);
        // Hand-rolled scalar Adam with constant gradient 1.
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=5 {
            m = cfg.beta1 * m + (1.0 - cfg.beta1);
            v = cfg.beta2 * v + (1.0 - cfg.beta2);
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            adam_step(&mut ps, &mut st);
            assert!((ps.get("w").unwrap().data()[0] - w).abs() < 1e-15);
        }
        // First step moves by lr / (1 + eps) after bias correction.
        let mut ps = single(0.0, 1.0);
        let mut st = AdamState::new(cfg);
        adam_step(&mut ps, &mut st);
        assert!((ps.get("w").unwrap().data()[0] + cfg.lr / (1.0 + cfg.eps)).abs() < 1e-18);
    }

    #[test]
    fn decoupled_weight_decay_shrinks_weights() {
        let mut ps = single(2.0, 0.0);
        let mut st = AdamState::new(AdamConfig {
            weight_decay: 1e-4,
            ..AdamConfig::default()
        });
        adam_step(&mut ps, &mut st);
        assert!((ps.get("w").unwrap().data()[0] - (2.0 - 1e-3 * 1e-4 * 2.0)).abs() < 1e-15);
    }
}

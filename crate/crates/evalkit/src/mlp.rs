use diffkernel::{adam_step, affine, AdamConfig, AdamState, Graph, ParamSet, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub window: usize,
    pub horizon: usize,
    pub hidden: [usize; 2],
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { window: 10, horizon: 50, hidden: [128, 64], stride: 1, epochs: 100, batch_size: 64, lr: 1e-3, seed: 0 }
    }
}

/// `(input window, following targets)` pairs starting every `stride`
/// points: `floor((T − w − s)/stride) + 1` of them.
pub fn mlp_pairs(series: &[f64], window: usize, horizon: usize, stride: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if stride == 0 || window == 0 || horizon == 0 {
        return Err(EvalError::InvalidArgument("window, horizon and stride must be ≥ 1".into()));
    }
    if series.len() < window + horizon {
        return Err(EvalError::InsufficientData(format!(
            "{} points for a {window}+{horizon} window",
            series.len()
        )));
    }
    Ok((0..=series.len() - window - horizon)
        .step_by(stride)
        .map(|i| (series[i..i + window].to_vec(), series[i + window..i + window + horizon].to_vec()))
        .collect())
}

const LAYERS: [&str; 3] = ["mlp.l1", "mlp.l2", "mlp.l3"];

/// Three-layer ReLU network from a capacity window to the next `horizon`
/// capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBaseline {
    pub config: MlpConfig,
    pub params: ParamSet,
}

impl MlpBaseline {
    pub fn new(config: MlpConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let widths = [config.window, config.hidden[0], config.hidden[1], config.horizon];
        for (k, name) in LAYERS.iter().enumerate() {
            params.add_affine(name, widths[k], widths[k + 1], &mut rng);
        }
        Self { config, params }
    }

    pub fn forecast(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.config.window {
            return Err(EvalError::Shape(format!("window of {} for an MLP reading {}", window.len(), self.config.window)));
        }
        let mut x = Tensor::new(vec![1, window.len()], window.to_vec())?;
        for (k, name) in LAYERS.iter().enumerate() {
            x = affine(&x, self.params.get(&format!("{name}.w"))?, self.params.get(&format!("{name}.b"))?)?;
            if k < 2 {
                x = x.map(|v| v.max(0.0));
            }
        }
        Ok(x.into_data())
    }

    /// Mean-squared-error training on stride-`config.stride` pairs from
    /// every series. Returns the mean loss of each epoch.
    pub fn train(&mut self, series: &[Vec<f64>]) -> Result<Vec<f64>> {
        let c = self.config.clone();
        let mut pairs = Vec::new();
        for s in series {
            if s.len() >= c.window + c.horizon {
                pairs.extend(mlp_pairs(s, c.window, c.horizon, c.stride)?);
            }
        }
        if pairs.is_empty() {
            return Err(EvalError::InsufficientData("no series long enough for one training pair".into()));
        }
        let mut adam = AdamState::new(AdamConfig { lr: c.lr, ..AdamConfig::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x6d6c70);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut losses = Vec::with_capacity(c.epochs);
        for _ in 0..c.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(c.batch_size.max(1)) {
                let b = idx.len();
                let x = Tensor::new(vec![b, c.window], idx.iter().flat_map(|&i| pairs[i].0.clone()).collect())?;
                let y = Tensor::new(vec![b, c.horizon], idx.iter().flat_map(|&i| pairs[i].1.clone()).collect())?;
                let mut g = Graph::new();
                let mut h = g.input(x);
                for (k, name) in LAYERS.iter().enumerate() {
                    let w = g.param(&self.params, &format!("{name}.w"))?;
                    let bias = g.param(&self.params, &format!("{name}.b"))?;
                    h = g.affine(h, w, bias)?;
                    if k < 2 {
                        h = g.relu(h)?;
                    }
                }
                let loss = g.squared_error(h, &y, 1.0 / (b * c.horizon) as f64)?;
                total += g.value(loss).data()[0] * b as f64;
                g.backward(loss)?.apply_to(&mut self.params)?;
                adam_step(&mut self.params, &mut adam);
            }
            losses.push(total / pairs.len() as f64);
        }
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_layer_returns_bias() {
        let mut m = MlpBaseline::new(MlpConfig { horizon: 4, ..MlpConfig::default() });
        m.params.get_mut("mlp.l3.w").unwrap().data_mut().fill(0.0);
        let bias = vec![0.9, 0.8, 0.7, 0.6];
        m.params.get_mut("mlp.l3.b").unwrap().data_mut().copy_from_slice(&bias);
        assert_eq!(m.forecast(&[0.95; 10]).unwrap(), bias);
    }

    #[test]
    fn learns_a_linear_fade() {
        let series: Vec<Vec<f64>> =
            (0..4).map(|k| (0..120).map(|i| 1.0 - (0.001 + 0.0002 * k as f64) * i as f64).collect()).collect();
        let mut m = MlpBaseline::new(MlpConfig { horizon: 10, epochs: 60, hidden: [32, 16], ..MlpConfig::default() });
        let losses = m.train(&series).unwrap();
        assert!(losses.last().unwrap() < &(losses[0] * 0.1));
    }
}

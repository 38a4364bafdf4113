//! Future-operation decoder. Each step feeds the trend value and the scaled
//! charge rate, discharge rate and temperature planned for that cycle into
//! an LSTM; an affine head reads one capacity value per step.

use diffkernel::lstm::{init_lstm, lstm_step, lstm_step_graph};
use diffkernel::{affine, Graph, KernelError, NodeId, ParamSet, Tensor};
use pimoe_data::ConditionTriple;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LSTM: &str = "fornn.lstm";
pub const HEAD: &str = "fornn.head";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FornnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("condition scaler fitted on no data")]
    EmptyScaler,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T, E = FornnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FornnConfig {
    pub hidden: usize,
    pub dropout: f64,
    /// When false the decoder sees the trend alone.
    pub use_conditions: bool,
}

impl Default for FornnConfig {
    fn default() -> Self {
        Self { hidden: 64, dropout: 0.05, use_conditions: true }
    }
}

impl FornnConfig {
    pub fn input_width(&self) -> usize {
        if self.use_conditions {
            4
        } else {
            1
        }
    }
}

/// Per-channel min-max scaling of the condition triple, fitted on the
/// training conditions. Values outside the fitted range extrapolate
/// linearly; a channel that never varied maps to 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionScaler {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl ConditionScaler {
    pub fn fit<'a>(conds: impl IntoIterator<Item = &'a ConditionTriple>) -> Result<Self> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for c in conds {
            any = true;
            for (k, v) in c.as_array().into_iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !any {
            return Err(FornnError::EmptyScaler);
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, c: &ConditionTriple) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, v) in c.as_array().into_iter().enumerate() {
            let span = self.max[k] - self.min[k];
            out[k] = if span > 0.0 { (v - self.min[k]) / span } else { 0.5 };
        }
        out
    }
}

/// Registers the LSTM and head. The head bias starts at `head_bias`.
pub fn init_fornn<R: Rng + ?Sized>(params: &mut ParamSet, cfg: &FornnConfig, head_bias: f64, rng: &mut R) {
    init_lstm(params, LSTM, cfg.input_width(), cfg.hidden, rng);
    params.add_affine(HEAD, cfg.hidden, 1, rng);
    params.get_mut(&format!("{HEAD}.b")).expect("just inserted").data_mut()[0] = head_bias;
}

/// Stacks `[trend_t, c_t…]` rows into an `L × 4` input; with no conditions
/// the result is `L × 1`.
pub fn build_fornn_input(trend: &[f64], conds: Option<&[[f64; 3]]>) -> Result<Tensor> {
    let l = trend.len();
    match conds {
        Some(c) => {
            if c.len() != l {
                return Err(FornnError::Shape(format!("{l} trend steps vs {} condition rows", c.len())));
            }
            let mut data = Vec::with_capacity(4 * l);
            for (t, row) in trend.iter().zip(c) {
                data.push(*t);
                data.extend_from_slice(row);
            }
            Ok(Tensor::new(vec![l, 4], data)?)
        }
        None => Ok(Tensor::new(vec![l, 1], trend.to_vec())?),
    }
}

/// Eager decode of one sample from zero state; one output per input row.
pub fn rollout(input: &Tensor, params: &ParamSet) -> Result<Vec<f64>> {
    let w_h = params.get(&format!("{LSTM}.w_h"))?;
    let hidden = w_h.rows();
    let (head_w, head_b) = (params.get(&format!("{HEAD}.w"))?, params.get(&format!("{HEAD}.b"))?);
    let mut h = Tensor::zeros(&[1, hidden]);
    let mut c = Tensor::zeros(&[1, hidden]);
    let mut out = Vec::with_capacity(input.rows());
    for t in 0..input.rows() {
        let x = Tensor::new(vec![1, input.cols()], input.row(t).to_vec())?;
        let (h2, c2) = lstm_step(&x, &h, &c, params, LSTM)?;
        out.push(affine(&h2, head_w, head_b)?.data()[0]);
        h = h2;
        c = c2;
    }
    Ok(out)
}

/// Recorded decode for a batch. `trend` is `[B × L]`; `conds[t]` is the
/// `[B × 3]` scaled condition block of step `t` (ignored when the config
/// drops conditions). Dropout on the hidden state is active only when an
/// RNG is supplied.
pub fn rollout_graph<R: Rng + ?Sized>(
    g: &mut Graph,
    params: &ParamSet,
    cfg: &FornnConfig,
    trend: NodeId,
    conds: &[Tensor],
    mut rng: Option<&mut R>,
) -> Result<NodeId> {
    let (b, l) = (g.value(trend).rows(), g.value(trend).cols());
    if cfg.use_conditions && conds.len() != l {
        return Err(FornnError::Shape(format!("{l} trend steps vs {} condition blocks", conds.len())));
    }
    let head_w = g.param(params, &format!("{HEAD}.w"))?;
    let head_b = g.param(params, &format!("{HEAD}.b"))?;
    let mut h = g.input(Tensor::zeros(&[b, cfg.hidden]));
    let mut c = g.input(Tensor::zeros(&[b, cfg.hidden]));
    let mut outs = Vec::with_capacity(l);
    for t in 0..l {
        let tr = g.slice_cols(trend, t, t + 1)?;
        let x = if cfg.use_conditions {
            let ct = g.input(conds[t].clone());
            g.concat_cols(&[tr, ct])?
        } else {
            tr
        };
        let (h2, c2) = lstm_step_graph(g, params, LSTM, x, h, c)?;
        let hd = match rng.as_deref_mut() {
            Some(r) => g.dropout(h2, cfg.dropout, r, true)?,
            None => h2,
        };
        outs.push(g.affine(hd, head_w, head_b)?);
        h = h2;
        c = c2;
    }
    Ok(g.concat_cols(&outs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn input_layout() {
        let x = build_fornn_input(&[0.9, 0.8], Some(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])).unwrap();
        assert_eq!(x.shape(), &[2, 4]);
        assert_eq!(x.row(1), &[0.8, 0.4, 0.5, 0.6]);
        assert!(build_fornn_input(&[0.9], Some(&[[0.0; 3], [0.0; 3]])).is_err());
        assert_eq!(build_fornn_input(&[0.5], None).unwrap().shape(), &[1, 1]);
    }

    #[test]
    fn constant_conditions_replicate() {
        let c = [[0.25, 0.5, 0.75]; 50];
        let trend: Vec<f64> = (0..50).map(|t| 1.0 - 0.001 * t as f64).collect();
        let x = build_fornn_input(&trend, Some(&c)).unwrap();
        assert_eq!(x.shape(), &[50, 4]);
        for t in 0..50 {
            assert_eq!(&x.row(t)[1..], &[0.25, 0.5, 0.75]);
            assert_eq!(x.row(t)[0], trend[t]);
        }
    }

    #[test]
    fn zero_network_emits_head_bias() {
        let mut ps = ParamSet::new();
        let cfg = FornnConfig { hidden: 8, ..FornnConfig::default() };
        init_fornn(&mut ps, &cfg, 0.93, &mut ChaCha8Rng::seed_from_u64(0));
        for name in ["fornn.lstm.w_x", "fornn.lstm.w_h", "fornn.lstm.b"] {
            ps.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let x = build_fornn_input(&[0.7; 6], Some(&[[0.3; 3]; 6])).unwrap();
        assert_eq!(rollout(&x, &ps).unwrap(), vec![0.93; 6]);
    }

    #[test]
    fn scaler_channels() {
        let a = ConditionTriple::new(0.5, 1.0, 25.0).unwrap();
        let b = ConditionTriple::new(1.5, 1.0, 45.0).unwrap();
        let s = ConditionScaler::fit([&a, &b]).unwrap();
        assert_eq!(s.apply(&a), [0.0, 0.5, 0.0]);
        assert_eq!(s.apply(&b), [1.0, 0.5, 1.0]);
        let c = ConditionTriple::new(2.5, 1.0, 35.0).unwrap();
        assert_eq!(s.apply(&c), [2.0, 0.5, 0.5]);
        assert_eq!(ConditionScaler::fit([]), Err(FornnError::EmptyScaler));
    }
}

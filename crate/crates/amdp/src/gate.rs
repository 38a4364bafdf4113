use diffkernel::func::{masked_softmax_into, softplus};
use diffkernel::{matmul, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{AmdpError, Result};

/// Router decision for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutput {
    /// Logits after noise, the values top-k was taken over.
    pub logits: Vec<f64>,
    /// Standard-normal draw per expert; zeros when noise was off.
    pub noise: Vec<f64>,
    pub weights: Vec<f64>,
    /// Chosen experts in ascending index order.
    pub selected: Vec<usize>,
}

impl GateOutput {
    /// Expert with the largest weight, lowest index on ties.
    pub fn dominant(&self) -> usize {
        argmax(&self.weights)
    }
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// `H = x·W_g + ψ ⊙ softplus(x·W_noise)`. Passing `noise = None` (inference,
/// or training with noise disabled) leaves `H = x·W_g`.
pub fn router_logits<R: Rng + ?Sized>(
    x: &[f64],
    w_gate: &Tensor,
    w_noise: &Tensor,
    noise: Option<&mut R>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if w_gate.shape() != w_noise.shape() || w_gate.rows() != x.len() {
        return Err(AmdpError::Shape(format!(
            "router input of {} for gate {:?} / noise {:?}",
            x.len(),
            w_gate.shape(),
            w_noise.shape()
        )));
    }
    let xt = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let mut h = matmul(&xt, w_gate)?.into_data();
    let mut psi = vec![0.0; h.len()];
    if let Some(rng) = noise {
        let spread = matmul(&xt, w_noise)?;
        for ((hj, pj), &s) in h.iter_mut().zip(psi.iter_mut()).zip(spread.data()) {
            *pj = rng.sample(StandardNormal);
            *hj += *pj * softplus(s);
        }
    }
    Ok((h, psi))
}

/// Router over the most recent `window` capacity points instead of the
/// physics features.
pub fn history_mode_logits<R: Rng + ?Sized>(
    history: &[f64],
    window: usize,
    w_gate: &Tensor,
    w_noise: &Tensor,
    noise: Option<&mut R>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if history.len() < window || window == 0 {
        return Err(AmdpError::InsufficientData(format!(
            "history of {} points for a window of {window}",
            history.len()
        )));
    }
    router_logits(&history[history.len() - window..], w_gate, w_noise, noise)
}

/// Marks the `k` largest logits; equal logits go to the lower index.
pub fn top_k_mask(logits: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let mut mask = vec![false; logits.len()];
    for &i in order.iter().take(k) {
        mask[i] = true;
    }
    mask
}

/// Sparse gate: softmax over the top-k logits with everything else exactly
/// zero. `literal_double_softmax` applies the softmax a second time over the
/// same survivors.
pub fn gate_weights(logits: &[f64], k: usize, literal_double_softmax: bool) -> Result<GateOutput> {
    if k < 1 || k > logits.len() {
        return Err(AmdpError::InvalidArgument(format!("top-k of {k} over {} experts", logits.len())));
    }
    let mask = top_k_mask(logits, k);
    let mut weights = vec![0.0; logits.len()];
    masked_softmax_into(logits, &mask, &mut weights);
    if literal_double_softmax {
        let once = weights.clone();
        masked_softmax_into(&once, &mask, &mut weights);
    }
    let selected = (0..logits.len()).filter(|&i| mask[i]).collect();
    Ok(GateOutput { logits: logits.to_vec(), noise: vec![0.0; logits.len()], weights, selected })
}

/// `Var(A) / (Mean(A)² + eps)` over batch importances `A_j = Σ g_j`, with
/// population variance.
pub fn importance_cv_loss(gates: &[GateOutput], eps: f64) -> f64 {
    let Some(first) = gates.first() else { return 0.0 };
    let mut a = vec![0.0; first.weights.len()];
    for g in gates {
        for (aj, w) in a.iter_mut().zip(&g.weights) {
            *aj += w;
        }
    }
    diffkernel::cv_value(&a, eps)
}

use diffkernel::{Graph, NodeId, ParamSet, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::gate::{top_k_mask, GateOutput};
use crate::trend::{expert_names, AmdpConfig, LINEAR_TREND, W_GATE, W_NOISE};
use crate::{AmdpError, Result};

/// Recorded mixture forward for a batch.
pub struct AmdpBatch {
    /// `[B × horizon]`
    pub trend: NodeId,
    /// `[B × E]` sparse gate weights.
    pub gates: NodeId,
    pub gate_outputs: Vec<GateOutput>,
}

/// Records router, top-k gate and experts for `B` samples: `router_in` is
/// `[B × d]`, `expert_in` is `[B × n]`. Experts that no sample selected are
/// skipped; their contribution and gradient are zero anyway.
pub fn amdp_graph<R: Rng + ?Sized>(
    g: &mut Graph,
    params: &ParamSet,
    cfg: &AmdpConfig,
    router_in: &Tensor,
    expert_in: &Tensor,
    noise: Option<&mut R>,
) -> Result<AmdpBatch> {
    cfg.validate()?;
    let b = router_in.rows();
    if expert_in.rows() != b {
        return Err(AmdpError::Shape(format!(
            "router batch {b} vs expert batch {}",
            expert_in.rows()
        )));
    }
    let e = cfg.experts;
    let x = g.input(router_in.clone());
    let wg = g.param(params, W_GATE)?;
    let clean = g.matmul(x, wg)?;
    let (logits, psi) = match noise {
        Some(rng) => {
            let wn = g.param(params, W_NOISE)?;
            let pre = g.matmul(x, wn)?;
            let spread = g.softplus(pre)?;
            let draws: Vec<f64> = (0..b * e).map(|_| rng.sample(StandardNormal)).collect();
            let psi = g.input(Tensor::new(vec![b, e], draws.clone())?);
            let jitter = g.mul(psi, spread)?;
            (g.add(clean, jitter)?, draws)
        }
        None => (clean, vec![0.0; b * e]),
    };
    let lv = g.value(logits).clone();
    let mut mask = Vec::with_capacity(b * e);
    for r in 0..b {
        mask.extend(top_k_mask(lv.row(r), cfg.top_k));
    }
    let gates = g.masked_softmax(logits, mask.clone(), cfg.softmax_passes())?;

    let gv = g.value(gates).clone();
    let gate_outputs = (0..b)
        .map(|r| GateOutput {
            logits: lv.row(r).to_vec(),
            noise: psi[r * e..(r + 1) * e].to_vec(),
            weights: gv.row(r).to_vec(),
            selected: (0..e).filter(|&j| mask[r * e + j]).collect(),
        })
        .collect();

    let q = g.input(expert_in.clone());
    let mut trend: Option<NodeId> = None;
    for j in 0..e {
        if !(0..b).any(|r| mask[r * e + j]) {
            continue;
        }
        let [w1, b1, w2, b2] = expert_names(j);
        let (w1, b1) = (g.param(params, &w1)?, g.param(params, &b1)?);
        let (w2, b2) = (g.param(params, &w2)?, g.param(params, &b2)?);
        let h = g.affine(q, w1, b1)?;
        let h = g.relu(h)?;
        let y = g.affine(h, w2, b2)?;
        let gj = g.slice_cols(gates, j, j + 1)?;
        let part = g.scale_rows(y, gj)?;
        trend = Some(match trend {
            None => part,
            Some(t) => g.add(t, part)?,
        });
    }
    Ok(AmdpBatch { trend: trend.expect("every row selects an expert"), gates, gate_outputs })
}

/// Recorded single-affine trend for the linear ablation.
pub fn linear_trend_graph(g: &mut Graph, params: &ParamSet, expert_in: &Tensor) -> Result<NodeId> {
    let q = g.input(expert_in.clone());
    let w = g.param(params, &format!("{LINEAR_TREND}.w"))?;
    let b = g.param(params, &format!("{LINEAR_TREND}.b"))?;
    Ok(g.affine(q, w, b)?)
}

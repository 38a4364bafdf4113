use pimoe_amdp::{importance_cv_loss, GateOutput};

use crate::{Result, TrainError};

/// `(1/B) Σ_i ‖Ŝ_i − S_i‖²`.
pub fn trajectory_loss(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(TrainError::ModelContract(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    let mut sum = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(TrainError::ModelContract(format!("trajectory of {} vs target of {}", p.len(), t.len())));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / preds.len() as f64)
}

/// `α·L_traj + β·CV(A)`; the CV term is dropped when there are no gates.
pub fn total_loss(
    preds: &[Vec<f64>],
    targets: &[Vec<f64>],
    gates: &[GateOutput],
    alpha: f64,
    beta: f64,
    eps: f64,
) -> Result<f64> {
    let traj = trajectory_loss(preds, targets)?;
    let cv = if gates.is_empty() { 0.0 } else { importance_cv_loss(gates, eps) };
    Ok(alpha * traj + beta * cv)
}

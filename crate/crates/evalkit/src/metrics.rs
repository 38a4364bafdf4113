use serde::{Deserialize, Serialize};

use crate::{EvalError, Result};

/// Error metrics of one forecast. `mape_percent` is in percent; `r2` is NaN
/// when the truth has no variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub rmse: f64,
    pub mape_percent: f64,
    pub r2: f64,
    pub mae: f64,
}

impl MetricTriple {
    pub fn r2_defined(&self) -> bool {
        !self.r2.is_nan()
    }
}

pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<MetricTriple> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(EvalError::Shape(format!("{} predictions for {} truths", pred.len(), truth.len())));
    }
    if truth.iter().any(|&t| !(t > 0.0)) {
        return Err(EvalError::InvalidArgument("MAPE needs positive truth values".into()));
    }
    let n = pred.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let (mut sse, mut ape, mut ae, mut sst) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        let e = p - t;
        sse += e * e;
        ae += e.abs();
        ape += (e / t).abs();
        sst += (t - mean) * (t - mean);
    }
    Ok(MetricTriple {
        rmse: (sse / n).sqrt(),
        mape_percent: 100.0 * ape / n,
        r2: if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN },
        mae: ae / n,
    })
}

/// Arithmetic mean of each metric; R² averages over rows where it is defined.
pub fn mean_metrics(rows: &[MetricTriple]) -> Option<MetricTriple> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let r2: Vec<f64> = rows.iter().map(|m| m.r2).filter(|r| !r.is_nan()).collect();
    Some(MetricTriple {
        rmse: rows.iter().map(|m| m.rmse).sum::<f64>() / n,
        mape_percent: rows.iter().map(|m| m.mape_percent).sum::<f64>() / n,
        r2: if r2.is_empty() { f64::NAN } else { r2.iter().sum::<f64>() / r2.len() as f64 },
        mae: rows.iter().map(|m| m.mae).sum::<f64>() / n,
    })
}

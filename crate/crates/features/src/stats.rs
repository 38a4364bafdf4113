use serde::{Deserialize, Serialize};

use crate::{FeatureError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    /// Sample variance, `1/(n-1)`.
    pub var: f64,
    pub skew: f64,
    /// Excess kurtosis.
    pub kurt: f64,
}

/// Summary statistics in the mixed convention used for the relaxation and
/// charge features: the variance divides by `n-1`, while skewness and
/// kurtosis average standardized powers over `n` using that same variance.
/// A flat sequence reports zero skewness and kurtosis.
pub fn stat_features(x: &[f64]) -> Result<StatSummary> {
    let n = x.len();
    if n < 2 {
        return Err(FeatureError::InsufficientData(format!(
            "statistics need at least 2 values, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::InvalidArgument("non-finite input".into()));
    }
    let nf = n as f64;
    let (mut max, mut min, mut sum) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for &v in x {
        max = max.max(v);
        min = min.min(v);
        sum += v;
    }
    let mean = sum / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let var = m2 / (nf - 1.0);
    // Rounding in the mean leaves a residue of order eps·|x| on flat input.
    let scale = max.abs().max(min.abs());
    if max == min || var.sqrt() <= 1e-12 * scale {
        return Ok(StatSummary { max, mean, min, var: 0.0, skew: 0.0, kurt: 0.0 });
    }
    let skew = m3 / (nf * var.powf(1.5));
    let kurt = m4 / (nf * var * var) - 3.0;
    Ok(StatSummary { max, mean, min, var, skew, kurt })
}

use serde::{Deserialize, Serialize};

use crate::samples::Sample;
use crate::{PreprocessError, Result};

/// Per-column minimum and maximum of the training features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(PreprocessError::InsufficientData("no rows to fit normalization on".into()));
        };
        let d = first.len();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            if r.len() != d {
                return Err(PreprocessError::InvalidArgument(format!("row of {} features, expected {d}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn is_fitted(&self) -> bool {
        !self.min.is_empty()
    }

    /// `(x − min)/(max − min)` clamped to `[0, 1]`; constant columns map to 0.5.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(PreprocessError::NotFitted);
        }
        if x.len() != self.min.len() {
            return Err(PreprocessError::InvalidArgument(format!(
                "{} features for stats of width {}",
                x.len(),
                self.min.len()
            )));
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 })
            .collect())
    }
}

pub fn fit_norm(train: &[Sample]) -> Result<NormStats> {
    let rows: Vec<&[f64]> = train.iter().map(|s| s.features.as_slice()).collect();
    NormStats::fit(&rows)
}

/// Copies of `samples` with scaled feature columns.
pub fn apply_norm(stats: &NormStats, samples: &[Sample]) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| Ok(Sample { features: stats.apply(&s.features)?, ..s.clone() }))
        .collect()
}

use nalgebra::{DMatrix, DVector};

use crate::{EvalError, Result};

/// Least-squares polynomial of degree `d` through the window, extrapolated
/// `horizon` steps past its last point. Abscissae are rescaled to `[0, 1]`
/// over the window before fitting.
pub fn poly_baseline(history: &[f64], degree: usize, horizon: usize) -> Result<Vec<f64>> {
    let w = history.len();
    if w < degree + 1 || w < 2 {
        return Err(EvalError::Underdetermined { points: w, degree });
    }
    let span = (w - 1) as f64;
    let design = DMatrix::from_fn(w, degree + 1, |i, j| (i as f64 / span).powi(j as i32));
    let qr = design.qr();
    let qtb = qr.q().transpose() * DVector::from_column_slice(history);
    let coef = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| EvalError::InvalidArgument("rank-deficient polynomial design".into()))?;
    Ok((1..=horizon)
        .map(|s| {
            let u = (w - 1 + s) as f64 / span;
            coef.iter().rev().fold(0.0, |acc, c| acc * u + c)
        })
        .collect())
}

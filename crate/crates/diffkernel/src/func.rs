//! Scalar activations and row-wise softmax helpers shared by the eager
//! functions and the recording graph, so both paths produce identical bits.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)`, evaluated without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Max-shifted softmax over the entries flagged in `mask`; masked-out
/// entries are written as exactly zero. An all-false mask yields all zeros.
pub fn masked_softmax_into(x: &[f64], mask: &[bool], out: &mut [f64]) {
    let max = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for ((o, &v), &m) in out.iter_mut().zip(x).zip(mask) {
        *o = if m { (v - max).exp() } else { 0.0 };
        sum += *o;
    }
    if sum > 0.0 {
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mask = vec![true; x.len()];
    let mut out = vec![0.0; x.len()];
    masked_softmax_into(x, &mask, &mut out);
    out
}

/// Row-wise softmax of a matrix (`axis = 1`), or of a vector.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let mut out = x.clone();
    let mask = vec![true; cols];
    for (src, dst) in x
        .data()
        .chunks(cols.max(1))
        .zip(out.data_mut().chunks_mut(cols.max(1)))
    {
        masked_softmax_into(src, &mask, dst);
    }
    out
}

/// Column-wise softmax (`axis = 0`).
pub fn softmax_cols(x: &Tensor) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let mut out = x.clone();
    for j in 0..c {
        let col: Vec<f64> = (0..r).map(|i| x.get(i, j)).collect();
        for (i, v) in softmax(&col).into_iter().enumerate() {
            out.data_mut()[i * c + j] = v;
        }
    }
    out
}

pub fn softmax_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    match axis {
        0 => Ok(softmax_cols(x)),
        1 => Ok(softmax_rows(x)),
        _ => shape_err(format!("softmax axis {axis} out of range")),
    }
}

pub fn relu_t(x: &Tensor) -> Tensor {
    x.map(relu)
}

pub fn softplus_t(x: &Tensor) -> Tensor {
    x.map(softplus)
}

/// Inverted dropout mask: kept units carry `1/(1-p)`, dropped units zero.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Eager dropout. Identity outside training or when `p == 0`.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, p: f64, rng: &mut R, training: bool) -> Tensor {
    if !training || p <= 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.len(), p, rng);
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    out
}

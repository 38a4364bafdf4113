use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 30.0, iters: 1000, learning_rate: 200.0, early_exaggeration: 12.0, exaggeration_iters: 250, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// `KL(P ‖ Q)` before the first step and after every step.
    pub kl_trace: Vec<f64>,
    pub perplexity_used: f64,
}

impl TsneResult {
    pub fn final_kl(&self) -> f64 {
        *self.kl_trace.last().expect("trace starts with the initial KL")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-stochastic `p_{j|i}` with each row's Gaussian width set by bisection
/// so the row's perplexity matches the target. Returned row-major `n × n`.
pub fn conditional_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(EvalError::InvalidArgument(format!("{n} points have no neighbours")));
    }
    if !(perplexity > 0.0) {
        return Err(EvalError::InvalidArgument(format!("perplexity {perplexity}")));
    }
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            d[j] = if i == j { f64::INFINITY } else { sq_dist(&x[i], &x[j]) };
        }
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let row = &mut p[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if i == j {
                    row[j] = 0.0;
                    continue;
                }
                let e = (-(d[j] - dmin) * beta).exp();
                row[j] = e;
                sum += e;
                weighted += e * (d[j] - dmin);
            }
            weighted = if sum > 0.0 { weighted / sum } else { 0.0 };
            let entropy = sum.ln() + beta * weighted;
            let diff = entropy - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(p)
}

/// Symmetrized joint probabilities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let c = conditional_probabilities(x, perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((c[i * n + j] + c[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
        p[i * n + i] = 0.0;
    }
    Ok(p)
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = 1.0 / (1.0 + sq_dist(&y[i], &y[j]));
                num[i * n + j] = v;
                z += v;
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                kl += pij * (pij / (num[i * n + j] / z).max(1e-300)).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE to two dimensions. The perplexity is capped at `(n − 1)/3`.
pub fn tsne_embed(x: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.len();
    if n < 5 {
        return Err(EvalError::InvalidArgument(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if n > 5000 {
        return Err(EvalError::InvalidArgument(format!("exact t-SNE limited to 5000 points, got {n}")));
    }
    let cap = (n - 1) as f64 / 3.0;
    let perplexity = if cfg.perplexity > cap {
        log::warn!("perplexity {} capped at {cap:.3} for {n} points", cfg.perplexity);
        cap
    } else {
        cfg.perplexity
    };
    let p = joint_probabilities(x, perplexity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    trace.push(kl_divergence(&p, &y));
    let mut num = vec![0.0; n * n];
    for it in 0..cfg.iters {
        let exaggeration = if it < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = if i == j { 0.0 } else { 1.0 / (1.0 + sq_dist(&y[i], &y[j])) };
                num[i * n + j] = v;
                z += v;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exaggeration * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
                grad[0] += 4.0 * w * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * w * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                let same_sign = (grad[k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same_sign { (gains[i][k] * 0.8f64).max(0.01) } else { gains[i][k] + 0.2 };
                update[i][k] = momentum * update[i][k] - cfg.learning_rate * gains[i][k] * grad[k];
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let mean = y.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        for yi in &mut y {
            yi[0] -= mean[0] / n as f64;
            yi[1] -= mean[1] / n as f64;
        }
        trace.push(kl_divergence(&p, &y));
    }
    Ok(TsneResult { embedding: y, kl_trace: trace, perplexity_used: perplexity })
}

/// Mean silhouette coefficient; points alone in their cluster score 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(EvalError::Shape(format!("{} points for {} labels", points.len(), labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for (i, pi) in points.iter().enumerate() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (j, pj) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += sq_dist(pi, pj).sqrt();
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    Ok(total / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_single_neighbour() {
        let p = conditional_probabilities(&[vec![0.0], vec![3.0]], 30.0).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn too_few_points() {
        let x = vec![vec![0.0]; 4];
        assert!(matches!(tsne_embed(&x, &TsneConfig::default()), Err(EvalError::InvalidArgument(_))));
    }

    #[test]
    fn rows_hit_target_perplexity() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let p = conditional_probabilities(&x, 8.0).unwrap();
        for row in p.chunks(40) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
            assert!((h.exp() - 8.0).abs() < 1e-6);
        }
    }

    #[test]
    fn silhouette_of_separated_pairs() {
        let pts = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        let b = (100.0f64).sqrt().mul_add(0.5, 0.5 * 101.0f64.sqrt());
        assert!((s - (b - 1.0) / b).abs() < 1e-12);
    }
}

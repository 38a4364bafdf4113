//! LSTM cell, eager and recorded.
//!
//! Parameters live under a prefix: `{prefix}.w_x` `[input × 4H]`,
//! `{prefix}.w_h` `[H × 4H]` and `{prefix}.b` `[4H]`, with gate blocks in the
//! order input, forget, candidate, output.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::func::sigmoid;
use crate::graph::{Graph, NodeId};
use crate::params::{glorot_uniform, ParamSet};
use crate::tensor::{self, Tensor};

pub fn w_x_name(prefix: &str) -> String {
    format!("{prefix}.w_x")
}

pub fn w_h_name(prefix: &str) -> String {
    format!("{prefix}.w_h")
}

pub fn bias_name(prefix: &str) -> String {
    format!("{prefix}.b")
}

/// Registers LSTM weights: Glorot-uniform per gate block, zero bias except
/// the forget gate, which starts at `+1`.
pub fn init_lstm<R: Rng + ?Sized>(
    params: &mut ParamSet,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) {
    params.insert(
        w_x_name(prefix),
        glorot_uniform(input, 4 * hidden, input, hidden, rng),
    );
    params.insert(
        w_h_name(prefix),
        glorot_uniform(hidden, 4 * hidden, hidden, hidden, rng),
    );
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    params.insert(bias_name(prefix), Tensor::vector(b));
}

/// Hidden width implied by the stored weights.
pub fn hidden_size(params: &ParamSet, prefix: &str) -> Result<usize> {
    Ok(params.get(&w_h_name(prefix))?.rows())
}

/// One eager step for a batch: `x` is `[B × input]`, `h`/`c` are `[B × H]`.
pub fn lstm_step(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    params: &ParamSet,
    prefix: &str,
) -> Result<(Tensor, Tensor)> {
    let w_x = params.get(&w_x_name(prefix))?;
    let w_h = params.get(&w_h_name(prefix))?;
    let b = params.get(&bias_name(prefix))?;
    let hidden = w_h.rows();
    if h_prev.cols() != hidden || c_prev.cols() != hidden || h_prev.rows() != x.rows() {
        return shape_err(format!(
            "lstm state {:?}/{:?} for hidden {hidden} and input {:?}",
            h_prev.shape(),
            c_prev.shape(),
            x.shape()
        ));
    }
    let gx = tensor::matmul(x, w_x)?;
    let gh = tensor::matmul(h_prev, w_h)?;
    let gates = tensor::add_row_bias(&gx.zip_map(&gh, |a, b| a + b)?, b)?;
    let rows = x.rows();
    let mut h = vec![0.0; rows * hidden];
    let mut c = vec![0.0; rows * hidden];
    for r in 0..rows {
        let g = gates.row(r);
        for j in 0..hidden {
            let i_g = sigmoid(g[j]);
            let f_g = sigmoid(g[hidden + j]);
            let cand = g[2 * hidden + j].tanh();
            let o_g = sigmoid(g[3 * hidden + j]);
            let cv = f_g * c_prev.get(r, j) + i_g * cand;
            c[r * hidden + j] = cv;
            h[r * hidden + j] = o_g * cv.tanh();
        }
    }
    Ok((
        Tensor::new(vec![rows, hidden], h)?,
        Tensor::new(vec![rows, hidden], c)?,
    ))
}

/// Recorded step. Returns the new `(h, c)` node ids.
pub fn lstm_step_graph(
    g: &mut Graph,
    params: &ParamSet,
    prefix: &str,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let w_x = g.param(params, &w_x_name(prefix))?;
    let w_h = g.param(params, &w_h_name(prefix))?;
    let b = g.param(params, &bias_name(prefix))?;
    let hidden = g.value(w_h).rows();
    let gx = g.matmul(x, w_x)?;
    let gh = g.matmul(h_prev, w_h)?;
    let pre = g.add(gx, gh)?;
    let gates = g.add_bias(pre, b)?;
    let i_pre = g.slice_cols(gates, 0, hidden)?;
    let f_pre = g.slice_cols(gates, hidden, 2 * hidden)?;
    let c_pre = g.slice_cols(gates, 2 * hidden, 3 * hidden)?;
    let o_pre = g.slice_cols(gates, 3 * hidden, 4 * hidden)?;
    let i_g = g.sigmoid(i_pre)?;
    let f_g = g.sigmoid(f_pre)?;
    let cand = g.tanh(c_pre)?;
    let o_g = g.sigmoid(o_pre)?;
    let keep = g.mul(f_g, c_prev)?;
    let write = g.mul(i_g, cand)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c)?;
    let h = g.mul(o_g, c_act)?;
    Ok((h, c))
}

/// Eager rollout over a sequence of `[B × input]` steps from zero state.
/// Returns the hidden state after every step.
pub fn lstm_rollout(xs: &[Tensor], params: &ParamSet, prefix: &str) -> Result<Vec<Tensor>> {
    let hidden = hidden_size(params, prefix)?;
    let rows = xs.first().map_or(0, Tensor::rows);
    let mut h = Tensor::zeros(&[rows, hidden]);
    let mut c = Tensor::zeros(&[rows, hidden]);
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let (h2, c2) = lstm_step(x, &h, &c, params, prefix)?;
        out.push(h2.clone());
        h = h2;
        c = c2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_network_gives_zero_hidden() {
        let mut ps = ParamSet::new();
        ps.insert("l.w_x", Tensor::zeros(&[3, 8]));
        ps.insert("l.w_h", Tensor::zeros(&[2, 8]));
        ps.insert("l.b", Tensor::zeros(&[8]));
        let x = Tensor::filled(&[1, 3], 0.7);
        let (h, c) = lstm_step(&x, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2]), &ps, "l").unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        // One input, one hidden unit: gate pre-activations are w_x*x + w_h*h + b.
        let mut ps = ParamSet::new();
        ps.insert("l.w_x", Tensor::new(vec![1, 4], vec![0.5, -0.3, 0.8, 0.1]).unwrap());
        ps.insert("l.w_h", Tensor::new(vec![1, 4], vec![0.2, 0.4, -0.6, 0.9]).unwrap());
        ps.insert("l.b", Tensor::vector(vec![0.1, 1.0, -0.2, 0.0]));
        let (x, h0, c0) = (1.5, -0.4, 0.3);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.2 * h0 + 0.1);
        let f = sig(-0.3 * x + 0.4 * h0 + 1.0);
        let g = (0.8 * x - 0.6 * h0 - 0.2).tanh();
        let o = sig(0.1 * x + 0.9 * h0);
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();
        let (h, c) = lstm_step(
            &Tensor::scalar(x),
            &Tensor::scalar(h0),
            &Tensor::scalar(c0),
            &ps,
            "l",
        )
        .unwrap();
        assert!((h.data()[0] - h1).abs() < 1e-15);
        assert!((c.data()[0] - c1).abs() < 1e-15);
    }

    #[test]
    fn graph_step_equals_eager_step_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        init_lstm(&mut ps, "l", 4, 6, &mut rng);
        let xs: Vec<Tensor> = (0..5)
            .map(|t| Tensor::new(vec![2, 4], (0..8).map(|k| ((t * 8 + k) as f64 * 0.37).sin()).collect()).unwrap())
            .collect();
        let eager = lstm_rollout(&xs, &ps, "l").unwrap();

        let mut g = Graph::new();
        let mut h = g.input(Tensor::zeros(&[2, 6]));
        let mut c = g.input(Tensor::zeros(&[2, 6]));
        for (t, x) in xs.iter().enumerate() {
            let xn = g.input(x.clone());
            let (h2, c2) = lstm_step_graph(&mut g, &ps, "l", xn, h, c).unwrap();
            assert_eq!(g.value(h2), &eager[t]);
            h = h2;
            c = c2;
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        init_lstm(&mut ps, "l", 4, 3, &mut rng);
        assert_eq!(ps.get("l.b").unwrap().data(), &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }
}

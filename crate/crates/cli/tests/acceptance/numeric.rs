//! Criteria checked against independent oracles: gradients, gating, loss,
//! metrics, features, baselines and t-SNE.

use std::time::Instant;

use diffkernel::{cv_value, init_lstm, lstm_step_graph, Graph, NodeId, ParamSet, Tensor};
use pimoe_amdp::{gate_weights, router_logits};
use pimoe_data::{ChargePoint, ChargeVector, ConditionTriple};
use pimoe_evalkit::{
    compute_metrics, evaluate_history_forecaster, mlp_pairs, poly_baseline, silhouette, tsne_embed, MlpBaseline,
    MlpConfig, TsneConfig,
};
use pimoe_features::{assemble_features, dv_at_dq, q_at_dv, stat_features, FeatureMode, FeatureParams};
use pimoe_preprocess::{Sample, SampleConfig};
use pimoe_synthgen::{gen_fleet, SynthConfig};
use pimoe_trainer::{batch_loss, export_gates, predict_trajectory, ModelState, Prepared, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Verdict;

const SEEDS: u64 = 100;
const GRAD_TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Fourth-order five-point difference of `f` at `x` with step `h`.
fn five_point(x: f64, h: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Weighted sum of every element of `y`, with fixed random weights.
fn project(g: &mut Graph, y: NodeId, seed: u64) -> diffkernel::Result<NodeId> {
    let v = g.value(y).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let w = Tensor::new(vec![v.rows(), v.cols()], (0..v.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let wn = g.input(w);
    let prod = g.mul(y, wn)?;
    let col = g.sum_rows(prod)?;
    let ones = g.input(Tensor::filled(&[v.cols(), 1], 1.0));
    g.matmul(col, ones)
}

/// Worst relative gap between recorded and finite-difference gradients.
fn op_error<F>(params: &ParamSet, f: F) -> f64
where
    F: Fn(&mut Graph, &ParamSet) -> diffkernel::Result<NodeId>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, params).unwrap();
    let grads = g.backward(loss).unwrap().param_grads();
    let eval = |p: &ParamSet| {
        let mut g = Graph::new();
        let l = f(&mut g, p).unwrap();
        g.value(l).data()[0]
    };
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for name in params.names() {
        let name = name.to_string();
        for i in 0..params.get(&name).unwrap().len() {
            let orig = probe.get(&name).unwrap().data()[i];
            let numeric = five_point(orig, 1e-4, |v| {
                probe.get_mut(&name).unwrap().data_mut()[i] = v;
                eval(&probe)
            });
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let analytic = grads.get(&name).map_or(0.0, |t| t.data()[i]);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

type OpCase = (&'static str, fn(u64) -> f64);

fn one_param(seed: u64, shape: &[usize]) -> (ParamSet, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    ps.insert("x", rand_tensor(&mut rng, shape));
    (ps, rng)
}

const OP_CASES: [OpCase; 11] = [
    ("matmul/add_bias/affine", |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut ps = ParamSet::new();
        ps.insert("x", rand_tensor(&mut rng, &[3, 4]));
        ps.insert("w", rand_tensor(&mut rng, &[4, 2]));
        ps.insert("b", rand_tensor(&mut rng, &[2]));
        op_error(&ps, |g, p| {
            let (x, w, b) = (g.param(p, "x")?, g.param(p, "w")?, g.param(p, "b")?);
            let m = g.matmul(x, w)?;
            let m = g.add_bias(m, b)?;
            let a = g.affine(x, w, b)?;
            let y = g.concat_cols(&[m, a])?;
            project(g, y, s)
        })
    }),
    ("add/sub/mul/scale", |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut ps = ParamSet::new();
        ps.insert("a", rand_tensor(&mut rng, &[2, 3]));
        ps.insert("b", rand_tensor(&mut rng, &[2, 3]));
        op_error(&ps, |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let s1 = g.add(a, b)?;
            let s2 = g.sub(a, b)?;
            let m = g.mul(s1, s2)?;
            let y = g.scale(m, -0.7)?;
            project(g, y, s)
        })
    }),
    ("relu/sigmoid/tanh/softplus", |s| {
        let (ps, _) = one_param(s, &[3, 5]);
        op_error(&ps, |g, p| {
            let x = g.param(p, "x")?;
            let parts = [g.relu(x)?, g.sigmoid(x)?, g.tanh(x)?, g.softplus(x)?];
            let y = g.concat_cols(&parts)?;
            project(g, y, s)
        })
    }),
    ("dropout", |s| {
        let (ps, _) = one_param(s, &[4, 6]);
        op_error(&ps, |g, p| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(s + 1000);
            let x = g.param(p, "x")?;
            let y = g.dropout(x, 0.3, &mut mask_rng, true)?;
            project(g, y, s)
        })
    }),
    ("slice/concat", |s| {
        let (ps, _) = one_param(s, &[3, 6]);
        op_error(&ps, |g, p| {
            let x = g.param(p, "x")?;
            let left = g.slice_cols(x, 0, 2)?;
            let right = g.slice_cols(x, 3, 6)?;
            let y = g.concat_cols(&[right, left])?;
            project(g, y, s)
        })
    }),
    ("scale_rows/sum_rows", |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut ps = ParamSet::new();
        ps.insert("x", rand_tensor(&mut rng, &[3, 4]));
        ps.insert("k", rand_tensor(&mut rng, &[3, 1]));
        op_error(&ps, |g, p| {
            let (x, k) = (g.param(p, "x")?, g.param(p, "k")?);
            let scaled = g.scale_rows(x, k)?;
            let col = g.sum_rows(scaled)?;
            project(g, col, s)
        })
    }),
    ("masked softmax, one pass", |s| softmax_case(s, 1)),
    ("masked softmax, two passes", |s| softmax_case(s, 2)),
    ("squared error + cv loss", |s| {
        let (ps, mut rng) = one_param(s, &[3, 4]);
        let target = rand_tensor(&mut rng, &[3, 4]);
        op_error(&ps, |g, p| {
            let x = g.param(p, "x")?;
            let mse = g.squared_error(x, &target, 1.0 / 3.0)?;
            let pos = g.softplus(x)?;
            let a = g.sum_rows(pos)?;
            let cv = g.cv_loss(a, 10.0)?;
            let cv = g.scale(cv, 0.25)?;
            let mse = g.scale(mse, 0.75)?;
            g.add(mse, cv)
        })
    }),
    ("two-layer relu net", |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut ps = ParamSet::new();
        ps.add_affine("l1", 5, 7, &mut rng);
        ps.add_affine("l2", 7, 3, &mut rng);
        for b in ["l1.b", "l2.b"] {
            for v in ps.get_mut(b).unwrap().data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        // A difference straddling a ReLU kink measures nothing; redraw.
        let x = loop {
            let x = rand_tensor(&mut rng, &[4, 5]);
            let pre = diffkernel::affine(&x, ps.get("l1.w").unwrap(), ps.get("l1.b").unwrap()).unwrap();
            if pre.data().iter().all(|v| v.abs() > 1e-3) {
                break x;
            }
        };
        let target = rand_tensor(&mut rng, &[4, 3]);
        op_error(&ps, |g, p| {
            let xn = g.input(x.clone());
            let (w1, b1) = (g.param(p, "l1.w")?, g.param(p, "l1.b")?);
            let (w2, b2) = (g.param(p, "l2.w")?, g.param(p, "l2.b")?);
            let h = g.affine(xn, w1, b1)?;
            let h = g.relu(h)?;
            let y = g.affine(h, w2, b2)?;
            g.squared_error(y, &target, 0.25)
        })
    }),
    ("lstm through time", |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut ps = ParamSet::new();
        init_lstm(&mut ps, "cell", 3, 4, &mut rng);
        for v in ps.get_mut("cell.b").unwrap().data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        ps.add_affine("head", 4, 1, &mut rng);
        let xs: Vec<Tensor> = (0..5).map(|_| rand_tensor(&mut rng, &[2, 3])).collect();
        let target = rand_tensor(&mut rng, &[2, 5]);
        op_error(&ps, |g, p| {
            let mut h = g.input(Tensor::zeros(&[2, 4]));
            let mut c = g.input(Tensor::zeros(&[2, 4]));
            let (hw, hb) = (g.param(p, "head.w")?, g.param(p, "head.b")?);
            let mut outs = Vec::new();
            for x in &xs {
                let xn = g.input(x.clone());
                (h, c) = lstm_step_graph(g, p, "cell", xn, h, c)?;
                outs.push(g.affine(h, hw, hb)?);
            }
            let y = g.concat_cols(&outs)?;
            g.squared_error(y, &target, 0.5)
        })
    }),
];

fn softmax_case(s: u64, passes: usize) -> f64 {
    let (ps, _) = one_param(s, &[4, 5]);
    let mask: Vec<bool> = (0..20).map(|i| !(i * 7 + s as usize).is_multiple_of(3)).collect();
    op_error(&ps, |g, p| {
        let x = g.param(p, "x")?;
        let y = g.masked_softmax(x, mask.clone(), passes)?;
        project(g, y, s)
    })
}

/// Hand-built sample with random inputs and a slowly fading target.
fn random_sample(rng: &mut ChaCha8Rng, n_q: usize, horizon: usize, id: usize) -> Sample {
    let nominal = 2000.0;
    let mut q = vec![0.0];
    for _ in 0..n_q {
        let last = *q.last().unwrap();
        q.push(last + rng.random_range(5.0..40.0));
    }
    let start = rng.random_range(0.8..1.0);
    Sample {
        battery_id: format!("T{id}"),
        anchor_cycle: 10 + id as u32,
        nominal_mah: nominal,
        q: ChargeVector { values_mah: q, v_start_v: 3.6, v_end_v: 4.2 },
        features: (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
        conditions: (0..horizon)
            .map(|_| ConditionTriple {
                charge_c_rate: rng.random_range(0.5..3.0),
                discharge_c_rate: rng.random_range(1.0..3.0),
                temperature_c: rng.random_range(20.0..45.0),
            })
            .collect(),
        target_mah: (0..horizon).map(|t| nominal * (start - 0.001 * t as f64)).collect(),
        history_mah: (0..12).map(|t| nominal * (start + 0.001 * (12 - t) as f64)).collect(),
    }
}

/// Tiny model (hidden 4) with four random samples, prepared for batching.
fn tiny_model(experts: usize, top_k: usize, beta: f64, seed: u64) -> (ModelState, Vec<Sample>, Vec<Prepared>) {
    let horizon = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..4).map(|i| random_sample(&mut rng, 5, horizon, i)).collect();
    let mut cfg = TrainConfig { horizon, seed, beta, batch_size: 4, ..TrainConfig::default() };
    cfg.amdp.experts = experts;
    cfg.amdp.top_k = top_k;
    cfg.amdp.expert_hidden = 4;
    cfg.fornn.hidden = 4;
    let sc = SampleConfig { horizon, n_q: 5, ..SampleConfig::default() };
    let model = ModelState::init(cfg, sc, &samples).unwrap();
    let prepared = samples.iter().map(|s| model.prepare(s).unwrap()).collect();
    (model, samples, prepared)
}

/// Full-model check: gate noise and dropout replay the same seed in every
/// evaluation, so the loss is a fixed function of the parameters.
fn model_error(model: &ModelState, data: &[Prepared], seed: u64) -> f64 {
    let refs: Vec<&Prepared> = data.iter().collect();
    let loss_of = |m: &ModelState| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        batch_loss(m, &refs, Some(&mut rng)).unwrap().2.total
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, node, _) = batch_loss(model, &refs, Some(&mut rng)).unwrap();
    let grads = g.backward(node).unwrap().param_grads();
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for (name, grad) in &grads {
        for i in 0..grad.len() {
            let orig = probe.params.get(name).unwrap().data()[i];
            // A small step keeps the stencil clear of ReLU and top-k kinks.
            let numeric = five_point(orig, 1e-6, |v| {
                probe.params.get_mut(name).unwrap().data_mut()[i] = v;
                loss_of(&probe)
            });
            probe.params.get_mut(name).unwrap().data_mut()[i] = orig;
            worst = worst.max(rel_err(grad.data()[i], numeric));
        }
    }
    worst
}

pub fn gradients() -> Verdict {
    let t0 = Instant::now();
    let mut worst_op = ("", 0.0f64);
    for (name, case) in OP_CASES {
        for s in 0..SEEDS {
            let e = case(s);
            if e > worst_op.1 {
                worst_op = (name, e);
            }
        }
    }
    let mut worst_model = 0.0f64;
    for s in 0..SEEDS {
        let (model, _, data) = tiny_model(2, 1, 0.25, s);
        worst_model = worst_model.max(model_error(&model, &data, s + 1000));
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict::check(
        worst_op.1 < GRAD_TOL && worst_model < GRAD_TOL && secs < 30.0,
        format!(
            "{} ops and the E=2 k=1 L=3 model over {SEEDS} seeds; worst op error {:.1e} ({}), model {:.1e}, {secs:.1} s",
            OP_CASES.len(),
            worst_op.1,
            worst_op.0,
            worst_model
        ),
    )
}

pub fn gating() -> Verdict {
    const DRAWS: usize = 100_000;
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum = 0.0f64;
    let mut worst_shift = 0.0f64;
    let mut violations = 0usize;
    for d in 0..DRAWS {
        let e = rng.random_range(2..=8);
        let k = rng.random_range(1..=e);
        let width = 12;
        let f: Vec<f64> = (0..width).map(|_| rng.random_range(0.0..1.0)).collect();
        let wg = rand_tensor(&mut rng, &[width, e]);
        let wn = rand_tensor(&mut rng, &[width, e]);
        let double = d % 2 == 1;

        let (h, _) = router_logits::<ChaCha8Rng>(&f, &wg, &wn, None).unwrap();
        let (h_again, _) = router_logits::<ChaCha8Rng>(&f, &wg, &wn, None).unwrap();
        let eval = gate_weights(&h, k, double).unwrap();
        if h_again != h || gate_weights(&h_again, k, double).unwrap().weights != eval.weights {
            violations += 1;
        }
        let mut noise_rng = ChaCha8Rng::seed_from_u64(d as u64);
        let (hn, _) = router_logits(&f, &wg, &wn, Some(&mut noise_rng)).unwrap();
        let noisy = gate_weights(&hn, k, double).unwrap();
        for g in [&eval, &noisy] {
            worst_sum = worst_sum.max((g.weights.iter().sum::<f64>() - 1.0).abs());
            let nonzero = g.weights.iter().filter(|&&w| w != 0.0).count();
            if g.weights.iter().any(|&w| w < 0.0) || nonzero != k || g.selected.len() != k {
                violations += 1;
            }
        }
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = h.iter().map(|v| v + c).collect();
        let s = gate_weights(&shifted, k, double).unwrap();
        for (a, b) in s.weights.iter().zip(&eval.weights) {
            worst_shift = worst_shift.max((a - b).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict::check(
        worst_sum <= 1e-9 && worst_shift <= 1e-9 && violations == 0 && secs < 10.0,
        format!(
            "{DRAWS} draws, E 2..8; worst |Σw−1| {worst_sum:.1e}, worst shift change {worst_shift:.1e}, \
             {violations} sign/count/determinism violations, {secs:.1} s"
        ),
    )
}

fn cv_oracle(a: &[f64], eps: f64) -> f64 {
    let n = a.len() as f64;
    let mut mean = 0.0;
    for v in a {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for v in a {
        var += (v - mean) * (v - mean);
    }
    var / n / (mean * mean + eps)
}

pub fn loss_components() -> Verdict {
    let uniform = cv_value(&[0.7; 5], 10.0);
    let mut g = Graph::new();
    let a = g.input(Tensor::new(vec![1, 5], vec![2.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
    let node = g.cv_loss(a, 10.0).unwrap();
    let recorded = g.value(node).data()[0];
    let eager = cv_value(&[2.0, 0.0, 0.0, 0.0, 0.0], 10.0);
    // mean 0.4, population variance 0.64, so 0.64 / (0.16 + 10).
    let hand = 0.64 / 10.16;
    let hand_gap = (recorded - hand).abs().max((eager - hand).abs());

    let mut worst_total = 0.0f64;
    for seed in 0..20 {
        for beta in [0.25, 0.0] {
            let (model, samples, prepared) = tiny_model(3, 2, beta, seed);
            let refs: Vec<&Prepared> = prepared.iter().collect();
            let parts = batch_loss::<ChaCha8Rng>(&model, &refs, None).unwrap().2;
            let gates = export_gates(&model, &samples).unwrap();
            let mut sq = 0.0;
            let mut importance = vec![0.0; 3];
            for ((s, p), gate) in samples.iter().zip(&prepared).zip(&gates) {
                let pred = predict_trajectory(s, &model).unwrap();
                for (a, b) in pred.iter().zip(&p.target) {
                    sq += (a - b) * (a - b);
                }
                for (acc, w) in importance.iter_mut().zip(&gate.weights) {
                    *acc += w;
                }
            }
            let expected = 0.75 * sq / samples.len() as f64 + beta * cv_oracle(&importance, 10.0);
            worst_total = worst_total.max((parts.total - expected).abs());
        }
    }
    Verdict::check(
        uniform == 0.0 && hand_gap <= 1e-9 && (hand - 0.06299).abs() < 5e-6 && worst_total <= 1e-12,
        format!(
            "uniform CV {uniform}; CV([2,0,0,0,0], 10) = {recorded:.11} (hand {hand:.11}); \
             worst total-loss gap {worst_total:.1e} over 40 models"
        ),
    )
}

pub fn metrics() -> Verdict {
    let hand = compute_metrics(&[99.0, 91.0], &[100.0, 90.0]).unwrap();
    let hand_ok = (hand.rmse - 1.0).abs() < 1e-12
        && (hand.mape_percent - (1.0 + 1.0 / 0.9) / 2.0).abs() < 1e-12
        && (hand.r2 - 0.96).abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(2..80);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(60.0..110.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t + rng.random_range(-5.0..5.0)).collect();
        let m = compute_metrics(&pred, &truth).unwrap();
        let nf = n as f64;
        let mut mean = 0.0;
        for t in &truth {
            mean += t;
        }
        mean /= nf;
        let (mut sse, mut ape, mut sst) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sse += (truth[i] - pred[i]).powi(2);
            ape += ((truth[i] - pred[i]) / truth[i]).abs();
            sst += (truth[i] - mean).powi(2);
        }
        let oracle = [(sse / nf).sqrt(), 100.0 * ape / nf, 1.0 - sse / sst];
        for (got, want) in [m.rmse, m.mape_percent, m.r2].into_iter().zip(oracle) {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    Verdict::check(
        hand_ok && worst <= 1e-12,
        format!(
            "hand case ({}, {:.4}%, {}); worst gap to scalar loops {worst:.1e} over 2000 cases",
            hand.rmse, hand.mape_percent, hand.r2
        ),
    )
}

fn stat_oracle(x: &[f64]) -> [f64; 6] {
    let n = x.len() as f64;
    let mut mean = 0.0;
    for v in x {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for v in x {
        var += (v - mean).powi(2);
    }
    var /= n - 1.0;
    let sd = var.sqrt();
    let (mut skew, mut kurt) = (0.0, 0.0);
    for v in x {
        skew += ((v - mean) / sd).powi(3);
        kurt += ((v - mean) / sd).powi(4);
    }
    let max = x.iter().cloned().fold(f64::MIN, f64::max);
    let min = x.iter().cloned().fold(f64::MAX, f64::min);
    [max, mean, min, var, skew / n, kurt / n - 3.0]
}

pub fn features() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(2..2000);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let s = stat_features(&x).unwrap();
        for (g, e) in [s.max, s.mean, s.min, s.var, s.skew, s.kurt].into_iter().zip(stat_oracle(&x)) {
            worst = worst.max((g - e).abs() / e.abs().max(1.0));
        }
    }
    // Linear curves at 1000 mAh/V from several start voltages.
    let mut q_gap = 0.0f64;
    let mut v_gap = 0.0f64;
    for v0 in [3.0, 3.2, 3.45] {
        let curve: Vec<ChargePoint> = (0..=100)
            .map(|i| {
                let v = v0 + i as f64 * 0.01;
                ChargePoint { time_s: 36.0 * i as f64, voltage_v: v, current_a: 1.0, cumulative_mah: 1000.0 * (v - v0) }
            })
            .collect();
        q_gap = q_gap.max((q_at_dv(&curve, v0, 0.05).unwrap() - 50.0).abs());
        v_gap = v_gap.max((dv_at_dq(&curve, v0, 200.0).unwrap() - 0.2).abs());
        let charge = ChargeVector { values_mah: (0..=50).map(|i| 20.0 * i as f64).collect(), v_start_v: v0, v_end_v: v0 + 1.0 };
        let fv = assemble_features(&charge, &curve, None, FeatureMode::ChargeOnly6, FeatureParams::default()).unwrap();
        q_gap = q_gap.max((fv.values[4] - 50.0).abs());
        v_gap = v_gap.max((fv.values[5] - 0.2).abs());
    }
    Verdict::check(
        worst <= 1e-12 && q_gap <= 1e-12 * 50.0 && v_gap <= 1e-12 * 0.2,
        format!("worst statistic gap {worst:.1e} over 500 vectors; |Q0.05−50| {q_gap:.1e} mAh, |ΔV200−0.2| {v_gap:.1e} V"),
    )
}

pub fn baselines() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let f = |t: f64| {
            let u = t / 30.0;
            c[0] + c[1] * u + c[2] * u * u + c[3] * u * u * u
        };
        let w = rng.random_range(4..30);
        let h = rng.random_range(1..60);
        let hist: Vec<f64> = (0..w).map(|t| f(t as f64)).collect();
        for (k, p) in poly_baseline(&hist, 3, h).unwrap().iter().enumerate() {
            let truth = f((w + k) as f64);
            worst = worst.max((p - truth).abs() / truth.abs().max(1.0));
        }
    }
    let mut count_mismatch = 0;
    for _ in 0..500 {
        let (t, w, s, stride) = (rng.random_range(1..200), rng.random_range(1..20), rng.random_range(1..60), rng.random_range(1..7));
        let series: Vec<f64> = (0..t).map(|i| i as f64).collect();
        let mut expected = 0;
        let mut i = 0;
        while i + w + s <= t {
            expected += 1;
            i += stride;
        }
        let got = mlp_pairs(&series, w, s, stride).map_or(0, |p| p.len());
        if got != expected {
            count_mismatch += 1;
        }
    }

    let fleet = gen_fleet(&SynthConfig::ul_like(6, 3)).unwrap();
    let series: Vec<(String, String, Vec<f64>)> = fleet
        .dataset
        .batteries
        .iter()
        .map(|b| {
            (b.battery_id.clone(), b.condition_tag.clone(), b.capacities().iter().map(|q| q / b.nominal_capacity_mah).collect())
        })
        .collect();
    let (window, horizon, stride) = (10, 50, 10);
    let poly = evaluate_history_forecaster(&series, window, horizon, stride, |h| poly_baseline(h, 3, horizon));
    let mut mlp = MlpBaseline::new(MlpConfig { window, horizon, hidden: [32, 16], stride: 5, epochs: 20, ..MlpConfig::default() });
    let trained = mlp.train(&series.iter().map(|s| s.2.clone()).collect::<Vec<_>>());
    let mlp_rows = trained.and_then(|_| evaluate_history_forecaster(&series, window, horizon, stride, |h| mlp.forecast(h)));
    let harness_ok = match (&poly, &mlp_rows) {
        (Ok(p), Ok(m)) => {
            p.len() == series.len()
                && m.len() == series.len()
                && p.iter().chain(m).all(|r| r.metrics.mape_percent.is_finite() && r.n_windows > 0)
        }
        _ => false,
    };
    Verdict::check(
        worst <= 1e-8 && count_mismatch == 0 && harness_ok,
        format!(
            "cubic extrapolation worst gap {worst:.1e}; {count_mismatch} pair-count mismatches in 500 cases; \
             shared harness ran poly and MLP over {} batteries",
            series.len()
        ),
    )
}

pub fn tsne() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let centres = [[0.7, 0.3, 0.0, 0.0, 0.0], [0.0, 0.0, 0.25, 0.75, 0.0]];
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..60 {
            let mut w: Vec<f64> = centre.iter().map(|v| (v + rng.random_range(-0.05..0.05f64)).max(0.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            x.push(w);
            labels.push(c);
        }
    }
    let res = tsne_embed(&x, &TsneConfig { seed: 13, ..TsneConfig::default() }).unwrap();
    let kl0 = res.kl_trace[0];
    let kl = res.final_kl();
    let sil = silhouette(&res.embedding, &labels).unwrap();
    Verdict::check(
        kl < kl0 && kl <= 0.5 * kl0 && sil > 0.5,
        format!("KL {kl0:.3} → {kl:.3} ({:.0}% lower); silhouette {sil:.3} on 120 gate vectors", 100.0 * (1.0 - kl / kl0)),
    )
}

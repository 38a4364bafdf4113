use std::time::Instant;

use diffkernel::{adam_step, AdamConfig, AdamState, Graph, NodeId, Tensor};
use pimoe_amdp::{amdp_graph, linear_trend_graph, GateOutput};
use pimoe_data::derive_seed;
use pimoe_fornn::rollout_graph;
use pimoe_preprocess::{Sample, SampleConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::RngState;
use crate::config::TrainConfig;
use crate::model::{ModelState, Prepared};
use crate::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub traj_loss: f64,
    pub cv_loss: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// `(1/B) Σ ‖Ŝ − S‖²`, before the α weight.
    pub traj: f64,
    /// Importance CV, before the β weight; 0 without a router.
    pub cv: f64,
}

struct BatchTensors {
    router: Tensor,
    expert: Tensor,
    conds: Vec<Tensor>,
    target: Tensor,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, b: usize, w: usize) -> Result<Tensor> {
    let data: Vec<f64> = rows.flatten().collect();
    Ok(Tensor::new(vec![b, w], data)?)
}

fn batch_tensors(batch: &[&Prepared], l: usize) -> Result<BatchTensors> {
    let b = batch.len();
    let first = batch.first().ok_or_else(|| TrainError::InvalidDataset("empty batch".into()))?;
    if let Some(p) = batch.iter().find(|p| p.target.len() != l || p.conds.len() != l) {
        return Err(TrainError::ModelContract(format!(
            "sample with {} targets and {} conditions for horizon {l}",
            p.target.len(),
            p.conds.len()
        )));
    }
    let conds = (0..l)
        .map(|t| stack(batch.iter().map(|p| p.conds[t].to_vec()), b, 3))
        .collect::<Result<_>>()?;
    Ok(BatchTensors {
        router: stack(batch.iter().map(|p| p.router_in.clone()), b, first.router_in.len())?,
        expert: stack(batch.iter().map(|p| p.expert_in.clone()), b, first.expert_in.len())?,
        conds,
        target: stack(batch.iter().map(|p| p.target.clone()), b, l)?,
    })
}

/// Records the forward pass for a batch. With an RNG, router noise (when
/// enabled) and decoder dropout are active.
fn forward<R: Rng + ?Sized>(
    g: &mut Graph,
    model: &ModelState,
    bt: &BatchTensors,
    mut rng: Option<&mut R>,
) -> Result<(NodeId, Option<NodeId>, Vec<GateOutput>)> {
    let cfg = &model.config;
    let (trend, gates, outs) = if cfg.variant.has_router() {
        let noise = if cfg.amdp.noise_in_training { rng.as_deref_mut() } else { None };
        let ab = amdp_graph(g, &model.params, &cfg.amdp, &bt.router, &bt.expert, noise)?;
        (ab.trend, Some(ab.gates), ab.gate_outputs)
    } else {
        (linear_trend_graph(g, &model.params, &bt.expert)?, None, Vec::new())
    };
    let pred = rollout_graph(g, &model.params, &cfg.effective_fornn(), trend, &bt.conds, rng)?;
    Ok((pred, gates, outs))
}

fn loss_nodes(
    g: &mut Graph,
    model: &ModelState,
    bt: &BatchTensors,
    pred: NodeId,
    gates: Option<NodeId>,
) -> Result<(NodeId, LossParts)> {
    let cfg = &model.config;
    let b = bt.target.rows() as f64;
    let traj = g.squared_error(pred, &bt.target, 1.0 / b)?;
    let traj_v = g.value(traj).data()[0];
    let mut total = g.scale(traj, cfg.alpha)?;
    let mut cv_v = 0.0;
    if let Some(gates) = gates {
        let a = g.sum_rows(gates)?;
        let cv = g.cv_loss(a, cfg.eps)?;
        cv_v = g.value(cv).data()[0];
        if cfg.beta > 0.0 {
            let weighted = g.scale(cv, cfg.beta)?;
            total = g.add(total, weighted)?;
        }
    }
    let total_v = g.value(total).data()[0];
    Ok((total, LossParts { total: total_v, traj: traj_v, cv: cv_v }))
}

/// Recorded composite loss for one batch, ready for `backward`.
pub fn batch_loss<R: Rng + ?Sized>(
    model: &ModelState,
    batch: &[&Prepared],
    rng: Option<&mut R>,
) -> Result<(Graph, NodeId, LossParts)> {
    let bt = batch_tensors(batch, model.config.horizon)?;
    let mut g = Graph::new();
    let (pred, gates, _) = forward(&mut g, model, &bt, rng)?;
    let (loss, parts) = loss_nodes(&mut g, model, &bt, pred, gates)?;
    Ok((g, loss, parts))
}

/// Mean trajectory loss without noise or dropout.
fn eval_traj_loss(model: &ModelState, data: &[Prepared]) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in data.chunks(256) {
        let refs: Vec<&Prepared> = chunk.iter().collect();
        let (_, _, parts) = batch_loss::<ChaCha8Rng>(model, &refs, None)?;
        sum += parts.traj * chunk.len() as f64;
    }
    Ok(sum / data.len() as f64)
}

/// One pass over `data` in shuffled mini-batches.
pub fn train_epoch(
    model: &mut ModelState,
    adam: &mut AdamState,
    data: &[Prepared],
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(TrainError::InvalidDataset("no training samples".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (mut loss, mut traj, mut cv, mut gsum, mut gmax) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    let batches = order.chunks(model.config.batch_size);
    let n_batches = batches.len();
    for (bi, idx) in batches.enumerate() {
        let batch: Vec<&Prepared> = idx.iter().map(|&i| &data[i]).collect();
        let (g, node, parts) = batch_loss(model, &batch, Some(&mut *rng))?;
        if !parts.total.is_finite() {
            return Err(TrainError::TrainingDiverged { epoch, batch: bi, loss: parts.total });
        }
        g.backward(node)?.apply_to(&mut model.params)?;
        let gn = model.params.grad_norm();
        if !gn.is_finite() {
            return Err(TrainError::TrainingDiverged { epoch, batch: bi, loss: gn });
        }
        adam_step(&mut model.params, adam);
        loss += parts.total;
        traj += parts.traj;
        cv += parts.cv;
        gsum += gn;
        gmax = gmax.max(gn);
    }
    let n = n_batches as f64;
    Ok(EpochStats {
        epoch,
        loss: loss / n,
        traj_loss: traj / n,
        cv_loss: cv / n,
        grad_norm_mean: gsum / n,
        grad_norm_max: gmax,
        val_loss: None,
    })
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the epoch with the lowest selection loss.
    pub model: ModelState,
    pub adam: AdamState,
    pub rng: RngState,
    pub best_epoch: usize,
    /// Wall-clock seconds per epoch, kept apart from the deterministic log.
    pub epoch_seconds: Vec<f64>,
}

fn prepare_all(model: &ModelState, samples: &[Sample]) -> Result<Vec<Prepared>> {
    let kept: Vec<&Sample> = samples.iter().filter(|s| model.accepts(s)).collect();
    if kept.len() < samples.len() {
        log::info!("{} samples lack the inputs this variant needs and are skipped", samples.len() - kept.len());
    }
    kept.into_iter().map(|s| model.prepare(s)).collect()
}

/// Trains a fresh model. Selection uses the validation trajectory loss, or
/// the training loss when `val` is empty; early stopping needs validation
/// data.
pub fn fit(train: &[Sample], val: &[Sample], config: TrainConfig, samples: SampleConfig) -> Result<FitOutcome> {
    let mut model = ModelState::init(config, samples, train)?;
    let cfg = model.config.clone();
    let train_p = prepare_all(&model, train)?;
    if train_p.is_empty() {
        return Err(TrainError::InvalidDataset("no usable training samples".into()));
    }
    let val_p = prepare_all(&model, val)?;
    let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"train"]));
    let mut best: Option<(f64, usize, diffkernel::ParamSet)> = None;
    let mut seconds = Vec::with_capacity(cfg.epochs);
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut stats = train_epoch(&mut model, &mut adam, &train_p, &mut rng, epoch)?;
        let score = if val_p.is_empty() {
            stats.loss
        } else {
            let v = eval_traj_loss(&model, &val_p)?;
            stats.val_loss = Some(v);
            v
        };
        seconds.push(t0.elapsed().as_secs_f64());
        log::debug!("epoch {epoch}: loss {:.6e} val {:?}", stats.loss, stats.val_loss);
        model.history.push(stats);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && !val_p.is_empty() && since_best >= cfg.patience {
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, e, params)) => {
            model.params = params;
            e
        }
        None => 0,
    };
    Ok(FitOutcome { model, adam, rng: RngState::capture(&rng), best_epoch, epoch_seconds: seconds })
}

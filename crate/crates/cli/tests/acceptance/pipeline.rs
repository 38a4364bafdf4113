//! Criteria that train models on synthetic fleets or drive the commands.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use pimoe_cli::{cmd_evaluate, cmd_ingest, cmd_predict, cmd_synth, cmd_train, EvaluateArgs, PredictArgs, RunConfig, Subset};
use pimoe_evalkit::{calibrate_expert_stage_map, evaluate_model, EvalError};
use pimoe_preprocess::{build_samples, Sample, SampleConfig};
use pimoe_synthgen::{gen_fleet, Fleet, SynthConfig};
use pimoe_trainer::{fit, load_checkpoint, predict_trajectory, save_checkpoint, Checkpoint, ModelState, TrainConfig, Variant};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::Verdict;

/// Environment variable naming an ingested archive of the published data.
const REAL_DATA_ENV: &str = "PIMOE_REAL_DATA";

/// The model trained for criterion 6, reused by later criteria.
#[derive(Default)]
pub struct Shared {
    trained: Option<(ModelState, Vec<Sample>)>,
}

impl Shared {
    /// Falls back to a short run when criterion 6 was not selected.
    fn model(&mut self) -> &(ModelState, Vec<Sample>) {
        self.trained.get_or_insert_with(|| {
            let (train, test, sc, _) = ul_split(12, 3, 8);
            let cfg = TrainConfig { epochs: 5, lr: 3e-3, batch_size: 32, ..TrainConfig::default() };
            (fit(&train, &[], cfg, sc).unwrap().model, test)
        })
    }
}

fn tags(fleet: &Fleet) -> BTreeMap<String, String> {
    fleet.dataset.batteries.iter().map(|b| (b.battery_id.clone(), b.condition_tag.clone())).collect()
}

/// Every `hold_every`-th battery goes to the test set; training anchors
/// every `stride` cycles, test anchors every cycle.
fn split_samples(fleet: &Fleet, hold_every: usize, sc: &SampleConfig, test_stride: usize) -> (Vec<Sample>, Vec<Sample>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, b) in fleet.dataset.batteries.iter().enumerate() {
        if i % hold_every == hold_every - 1 {
            test.extend(build_samples(b, &SampleConfig { anchor_stride: test_stride, ..sc.clone() }).unwrap());
        } else {
            train.extend(build_samples(b, sc).unwrap());
        }
    }
    (train, test)
}

fn ul_split(n: usize, seed: u64, stride: usize) -> (Vec<Sample>, Vec<Sample>, SampleConfig, Fleet) {
    let fleet = gen_fleet(&SynthConfig::ul_like(n, seed)).unwrap();
    let sc = SampleConfig { anchor_stride: stride, ..SampleConfig::default() };
    let (train, test) = split_samples(&fleet, 4, &sc, 1);
    (train, test, sc, fleet)
}

fn held_out_mape(model: &ModelState, test: &[Sample], fleet: &Fleet) -> f64 {
    evaluate_model(model, test, &tags(fleet)).unwrap().overall.expect("test batteries").mape_percent
}

pub fn end_to_end(shared: &mut Shared) -> Verdict {
    let cfg = SynthConfig::ul_like(32, 6);
    let noise_free = cfg.noise.capacity_mah == 0.0;
    let (train, test, sc, fleet) = ul_split(32, 6, 6);
    let train_cfg = TrainConfig { epochs: 200, seed: 6, ..TrainConfig::default() };
    let t0 = Instant::now();
    let out = fit(&train, &[], train_cfg, sc).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let mape = held_out_mape(&out.model, &test, &fleet);
    let verdict = Verdict::check(
        noise_free && mape < 2.0 && secs < 300.0,
        format!(
            "24 train / 8 test batteries, {} training samples, 200 epochs in {secs:.0} s; held-out MAPE {mape:.3}% over {} windows",
            train.len(),
            test.len()
        ),
    );
    shared.trained = Some((out.model, test));
    verdict
}

pub fn condition_sensitivity() -> Verdict {
    let mut gains = Vec::new();
    for seed in 0..10u64 {
        let fleet = gen_fleet(&SynthConfig::tpsl_like(32, 100 + seed)).unwrap();
        let sc = SampleConfig { anchor_stride: 12, ..SampleConfig::default() };
        let (train, test) = split_samples(&fleet, 4, &sc, 4);
        let mape = |variant| {
            let cfg = TrainConfig { epochs: 150, lr: 3e-3, batch_size: 32, seed, variant, ..TrainConfig::default() };
            held_out_mape(&fit(&train, &[], cfg, sc.clone()).unwrap().model, &test, &fleet)
        };
        let full = mape(Variant::Standard);
        let plain = mape(Variant::AblateFornnPlainRnn);
        gains.push((full, plain, 1.0 - full / plain));
    }
    let wins = gains.iter().filter(|g| g.2 >= 0.3).count();
    let listed: Vec<String> = gains.iter().map(|g| format!("{:.2}/{:.2}", g.0, g.1)).collect();
    Verdict::check(
        wins >= 8,
        format!("≥30% lower MAPE than the trend-only decoder in {wins}/10 seeds (MAPE % with/without conditions: {})", listed.join(" ")),
    )
}

pub fn specialization() -> Verdict {
    let (mut distinct, mut early_late) = (0, 0);
    let mut maps = Vec::new();
    for seed in 0..10u64 {
        let fleet = gen_fleet(&SynthConfig::ul_like(16, 200 + seed)).unwrap();
        let sc = SampleConfig { anchor_stride: 8, ..SampleConfig::default() };
        let (train, _) = split_samples(&fleet, 4, &sc, 8);
        let cfg = TrainConfig { epochs: 60, lr: 3e-3, batch_size: 32, seed, ..TrainConfig::default() };
        let model = fit(&train, &[], cfg, sc).unwrap().model;
        let stages: Vec<_> = train.iter().map(|s| fleet.stages[&s.battery_id][s.anchor_cycle as usize - 1]).collect();
        let map = match calibrate_expert_stage_map(&model, &train, &stages) {
            Ok(m) => {
                distinct += 1;
                m
            }
            Err(EvalError::CalibrationAmbiguous(m)) => m,
            Err(e) => return Verdict::check(false, format!("seed {seed}: {e}")),
        };
        if map.early != map.late {
            early_late += 1;
        }
        maps.push(format!("{}{}{}", map.early, map.mid, map.late));
    }
    Verdict::check(
        distinct >= 8 && early_late >= 8,
        format!(
            "three distinct experts in {distinct}/10 seeds, early ≠ late in {early_late}/10 (early/mid/late experts: {})",
            maps.join(" ")
        ),
    )
}

pub fn real_data() -> Verdict {
    let Some(dir) = std::env::var_os(REAL_DATA_ENV) else {
        return Verdict::skip(format!("set {REAL_DATA_ENV} to an ingested archive of the published data to run"));
    };
    let archive = Path::new(&dir);
    let work = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default().resolve().unwrap();
    let run = || -> Result<Vec<(String, f64)>, pimoe_cli::CliError> {
        cmd_train(&cfg, archive, &work.path().join("train"))?;
        let report = cmd_evaluate(
            &cfg,
            &EvaluateArgs {
                model: Some(work.path().join("train/model.ck")),
                baseline: None,
                archive: archive.to_path_buf(),
                split: Some(work.path().join("train/split.json")),
                subset: Subset::Test,
                truth_targets: false,
                out: work.path().join("eval"),
            },
        )?;
        Ok(report.conditions.iter().map(|c| (c.condition_tag.clone(), c.metrics.mape_percent)).collect())
    };
    match run() {
        Ok(rows) => {
            let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            let listed: Vec<String> = rows.iter().map(|(t, m)| format!("{t} {m:.2}%")).collect();
            Verdict::check(!rows.is_empty() && worst < 1.5, format!("per-condition MAPE: {}", listed.join(", ")))
        }
        Err(e) => Verdict::check(false, e.to_string()),
    }
}

pub fn latency(shared: &mut Shared) -> Verdict {
    let (model, _) = shared.model();
    let work = tempfile::tempdir().unwrap();
    let ck = work.path().join("model.ck");
    save_checkpoint(&ck, &Checkpoint::model_only(model.clone())).unwrap();
    let cfg = RunConfig { synth: Some(SynthConfig::ul_like(2, 6)), ..RunConfig::default() };
    let (csv_dir, archive) = (work.path().join("csv"), work.path().join("archive"));
    cmd_synth(&cfg, &csv_dir).unwrap();
    cmd_ingest(&csv_dir, &archive).unwrap();
    let out = work.path().join("predict");
    let args = PredictArgs {
        model: ck,
        archive,
        battery: "B000".into(),
        anchor: Some(100),
        horizon: None,
        conditions: None,
        repeat: 100,
        out: out.clone(),
    };
    if let Err(e) = cmd_predict(&args) {
        return Verdict::check(false, e.to_string());
    }
    let timing: Value = serde_json::from_str(&std::fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    let median = timing["latency"]["median_ms"].as_f64().unwrap_or(f64::INFINITY);
    let runs = timing["runs_ms"].as_array().map_or(0, Vec::len);
    Verdict::check(
        runs == 100 && median < 10.0 && timing["horizon"] == 50,
        format!("median {median:.3} ms over {runs} runs of feature extraction and a 50-cycle forecast"),
    )
}

pub fn horizon_robustness() -> Verdict {
    let fleet = gen_fleet(&SynthConfig::ul_like(16, 12)).unwrap();
    let mut mapes = Vec::new();
    for horizon in [50, 150] {
        let sc = SampleConfig { anchor_stride: 8, horizon, ..SampleConfig::default() };
        let (train, test) = split_samples(&fleet, 4, &sc, 4);
        let cfg = TrainConfig { epochs: 60, lr: 3e-3, batch_size: 32, seed: 12, horizon, ..TrainConfig::default() };
        mapes.push(held_out_mape(&fit(&train, &[], cfg, sc).unwrap().model, &test, &fleet));
    }
    let ratio = mapes[1] / mapes[0];
    Verdict::check(
        ratio <= 3.0,
        format!("MAPE {:.3}% at L=50, {:.3}% at L=150, ratio {ratio:.2}", mapes[0], mapes[1]),
    )
}

pub fn checkpoint_round_trip(shared: &mut Shared) -> Verdict {
    let (model, test) = shared.model();
    let work = tempfile::tempdir().unwrap();
    let path = work.path().join("model.ck");
    save_checkpoint(&path, &Checkpoint::model_only(model.clone())).unwrap();
    let loaded = load_checkpoint(&path).unwrap().model;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let picks = sample_indices(&mut rng, test.len(), 100.min(test.len()));
    let mut differing = 0;
    for i in picks.iter() {
        let a = predict_trajectory(&test[i], model).unwrap();
        let b = predict_trajectory(&test[i], &loaded).unwrap();
        if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) || a.len() != b.len() {
            differing += 1;
        }
    }
    let params_equal = model.params.names().count() == loaded.params.names().count()
        && model.params.names().all(|n| loaded.params.get(n).is_ok_and(|t| t.data() == model.params.get(n).unwrap().data()));
    Verdict::check(
        picks.len() == 100 && differing == 0 && params_equal,
        format!("{differing} of {} reloaded forecasts differ in any bit; parameters equal: {params_equal}", picks.len()),
    )
}

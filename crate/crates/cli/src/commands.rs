use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pimoe_data::{partition_dataset_with, ConditionTriple, Dataset, SplitSpec, Stage, StageMap};
use pimoe_evalkit::{
    calibrate_from_gates, classify_battery, confidence_table, evaluate_history_forecaster, evaluate_model, latency_stats,
    poly_baseline, stage_mean_weights, tsne_embed, BatteryMetrics, EvalError, EvalReport, LatencyStats, MlpBaseline,
    MlpConfig, RunMeta, SohBucket, METRIC_UNITS,
};
use pimoe_preprocess::{build_samples, cycle_sample, PreprocessError, Sample, SampleConfig};
use pimoe_synthgen::gen_fleet;
use pimoe_trainer::{
    export_gates, export_trend_embeddings, fit, load_checkpoint, predict_with_horizon, save_checkpoint, Checkpoint,
    EpochStats, ModelState, Variant,
};
use serde::{Deserialize, Serialize};

use crate::archive::{clean_dataset, load_archive, save_archive, Archive, Manifest};
use crate::config::{RunConfig, StageThresholds};
use crate::csvio::{emit_dataset, emit_truth, ingest_dataset, ingest_truth, Truth};
use crate::CliError;

pub const DATASET_META: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    name: String,
    condition_tag: String,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Generates the configured synthetic fleet and writes it in the CSV
/// layout, with `truth.csv` holding stages and noise-free SOH.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Dataset, CliError> {
    let synth = cfg.synth.as_ref().ok_or_else(|| CliError::Config("the synth command needs a `synth` section".into()))?;
    let fleet = gen_fleet(synth).map_err(|e| CliError::Config(e.to_string()))?;
    emit_dataset(&fleet.dataset, out)?;
    emit_truth(&Truth { stages: fleet.stages, soh: fleet.true_soh }, out)?;
    write_json(
        &out.join(DATASET_META),
        &DatasetMeta { name: fleet.dataset.name.clone(), condition_tag: fleet.dataset.condition_tag.clone() },
    )?;
    Ok(fleet.dataset)
}

/// Reads a CSV directory (cycles, summary, batteries, optional truth and
/// meta), cleans it and writes the archive.
pub fn cmd_ingest(src: &Path, out: &Path) -> Result<Manifest, CliError> {
    let meta_path = src.join(DATASET_META);
    let meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path)?;
        serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", meta_path.display())))?
    } else {
        let name = src.file_name().map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned());
        DatasetMeta { name, condition_tag: "mixed".into() }
    };
    let raw = ingest_dataset(
        &src.join(crate::csvio::CYCLES_CSV),
        &src.join(crate::csvio::SUMMARY_CSV),
        &src.join(crate::csvio::BATTERIES_CSV),
        &meta.name,
        &meta.condition_tag,
    )?;
    let truth_path = src.join(crate::csvio::TRUTH_CSV);
    let truth = if truth_path.exists() { Some(ingest_truth(&truth_path)?) } else { None };
    let archive = clean_dataset(raw, truth)?;
    save_archive(&archive, out)?;
    Ok(archive.manifest)
}

/// Which batteries of a split a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Subset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "all" => Ok(Subset::All),
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            other => Err(CliError::Config(format!("unknown subset `{other}` (all, train, val, test)"))),
        }
    }
}

fn subset_ids(split: Option<&Path>, subset: Subset) -> Result<Option<BTreeSet<String>>, CliError> {
    if subset == Subset::All {
        return Ok(None);
    }
    let path = split.ok_or_else(|| CliError::Config("a subset other than `all` needs --split".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let spec: SplitSpec = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Some(match subset {
        Subset::Train => spec.train_ids,
        Subset::Val => spec.val_ids,
        Subset::Test => spec.test_ids,
        Subset::All => unreachable!(),
    }))
}

/// Samples of the selected batteries; batteries too short for one window
/// are skipped.
pub fn samples_for(ds: &Dataset, ids: Option<&BTreeSet<String>>, sc: &SampleConfig) -> Result<Vec<Sample>, CliError> {
    let mut out = Vec::new();
    for b in &ds.batteries {
        if ids.is_some_and(|ids| !ids.contains(&b.battery_id)) {
            continue;
        }
        match build_samples(b, sc) {
            Ok(s) => out.extend(s),
            Err(PreprocessError::HorizonTooLong { .. }) => {
                log::warn!("{}: {} cycles is too short for the horizon, skipped", b.battery_id, b.cycles.len());
            }
            Err(e) => return Err(data_err(format!("{}: {e}", b.battery_id))),
        }
    }
    Ok(out)
}

fn cycle_position(ds: &Dataset, battery: &str, cycle: u32) -> Option<(usize, usize)> {
    let bi = ds.batteries.iter().position(|b| b.battery_id == battery)?;
    let ci = ds.batteries[bi].cycles.iter().position(|c| c.cycle_index == cycle)?;
    Some((bi, ci))
}

/// Stage of each sample's anchor cycle: generator truth when present,
/// otherwise measured SOH against the thresholds.
pub fn sample_stages(archive: &Archive, samples: &[Sample], th: StageThresholds) -> Result<Vec<Stage>, CliError> {
    samples
        .iter()
        .map(|s| {
            let (bi, ci) = cycle_position(&archive.dataset, &s.battery_id, s.anchor_cycle)
                .ok_or_else(|| data_err(format!("{}@{} not in the dataset", s.battery_id, s.anchor_cycle)))?;
            if let Some(t) = &archive.truth {
                if let Some(st) = t.stages.get(&s.battery_id).and_then(|v| v.get(ci)) {
                    return Ok(*st);
                }
            }
            let b = &archive.dataset.batteries[bi];
            let soh = b.cycles[ci].max_discharge_capacity_mah / b.nominal_capacity_mah;
            Ok(Stage::from_soh(soh, th.early_above, th.late_below))
        })
        .collect()
}

fn anchor_soh(archive: &Archive, s: &Sample) -> Option<f64> {
    let (bi, ci) = cycle_position(&archive.dataset, &s.battery_id, s.anchor_cycle)?;
    if let Some(v) = archive.truth.as_ref().and_then(|t| t.soh.get(&s.battery_id)).and_then(|v| v.get(ci)) {
        return Some(*v);
    }
    let b = &archive.dataset.batteries[bi];
    Some(b.cycles[ci].max_discharge_capacity_mah / b.nominal_capacity_mah)
}

/// Swaps measured targets for the generator's noise-free capacities.
fn truth_targets(archive: &Archive, samples: &mut [Sample]) -> Result<(), CliError> {
    let truth = archive.truth.as_ref().ok_or_else(|| CliError::Config("--truth-targets needs an archive with truth".into()))?;
    for s in samples {
        let (_, ci) = cycle_position(&archive.dataset, &s.battery_id, s.anchor_cycle)
            .ok_or_else(|| data_err(format!("{}@{} not in the dataset", s.battery_id, s.anchor_cycle)))?;
        let soh = &truth.soh[&s.battery_id];
        let l = s.target_mah.len();
        if ci + 1 + l > soh.len() {
            return Err(data_err(format!("truth for `{}` ends before cycle {}", s.battery_id, ci + 1 + l)));
        }
        s.target_mah = soh[ci + 1..ci + 1 + l].iter().map(|v| v * s.nominal_mah).collect();
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub stage_map: Option<StageMap>,
    pub history: Vec<EpochStats>,
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

#[derive(Serialize)]
struct TrainTiming<'a> {
    total_seconds: f64,
    epoch_seconds: &'a [f64],
}

/// Splits by battery, trains on the training pool with validation-based
/// selection, calibrates the stage map, and writes `model.ck`,
/// `training_log.json`, `split.json` and `config.json`.
pub fn cmd_train(cfg: &RunConfig, archive_dir: &Path, out: &Path) -> Result<TrainOutcome, CliError> {
    let archive = load_archive(archive_dir)?;
    let split = partition_dataset_with(&archive.dataset, cfg.train_fraction, cfg.train.seed, cfg.split).map_err(data_err)?;
    let train = samples_for(&archive.dataset, Some(&split.train_ids), &cfg.samples)?;
    let val = samples_for(&archive.dataset, Some(&split.val_ids), &cfg.samples)?;
    log::info!("{} training and {} validation samples", train.len(), val.len());
    let t0 = Instant::now();
    let outcome = fit(&train, &val, cfg.train.clone(), cfg.samples.clone())?;
    let total = t0.elapsed().as_secs_f64();
    let mut model = outcome.model;
    if model.config.variant.has_router() {
        let kept: Vec<Sample> = train.into_iter().filter(|s| model.accepts(s)).collect();
        let stages = sample_stages(&archive, &kept, cfg.stages)?;
        match calibrate_from_gates(&export_gates(&model, &kept)?, &stages) {
            Ok(map) => model.stage_map = Some(map),
            Err(EvalError::CalibrationAmbiguous(map)) => {
                log::warn!("stages share an expert after training: {map:?}");
                model.stage_map = Some(map);
            }
            Err(EvalError::InsufficientData(m)) => log::warn!("stage map not calibrated: {m}"),
            Err(e) => return Err(e.into()),
        }
    }
    fs::create_dir_all(out)?;
    let ck = Checkpoint { model, adam: Some(outcome.adam), rng: Some(outcome.rng) };
    save_checkpoint(&out.join("model.ck"), &ck)?;
    let result = TrainOutcome {
        best_epoch: outcome.best_epoch,
        n_train: split.train_ids.len(),
        n_val: split.val_ids.len(),
        stage_map: ck.model.stage_map,
        history: ck.model.history.clone(),
        epoch_seconds: outcome.epoch_seconds,
    };
    write_json(&out.join("training_log.json"), &result)?;
    write_json(&out.join("split.json"), &split)?;
    write_json(&out.join("config.json"), cfg)?;
    write_json(&out.join("timing.json"), &TrainTiming { total_seconds: total, epoch_seconds: &result.epoch_seconds })?;
    Ok(result)
}

fn load_model(path: &Path) -> Result<ModelState, CliError> {
    Ok(load_checkpoint(path)?.model)
}

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub archive: PathBuf,
    pub battery: String,
    /// Defaults to the battery's last cycle.
    pub anchor: Option<u32>,
    /// Defaults to the model's horizon.
    pub horizon: Option<usize>,
    /// CSV with `charge_c,discharge_c,temp_c` per future cycle; defaults to
    /// the recorded conditions after the anchor.
    pub conditions: Option<PathBuf>,
    pub repeat: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictOutcome {
    pub battery_id: String,
    pub anchor_cycle: u32,
    pub soh: Vec<f64>,
    pub latency: LatencyStats,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionRow {
    charge_c: f64,
    discharge_c: f64,
    temp_c: f64,
}

fn read_conditions(path: &Path) -> Result<Vec<ConditionTriple>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ConditionRow>().enumerate() {
        let r = row.map_err(|e| CliError::Ingest { file: path.display().to_string(), row: i as u64 + 2, msg: e.to_string() })?;
        out.push(ConditionTriple::new(r.charge_c, r.discharge_c, r.temp_c).map_err(|e| CliError::Ingest {
            file: path.display().to_string(),
            row: i as u64 + 2,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TrajectoryRow {
    battery_id: String,
    anchor_cycle: u32,
    step: usize,
    soh_pred: f64,
    #[serde(rename = "capacity_pred_mAh")]
    capacity_pred_mah: f64,
    #[serde(rename = "capacity_measured_mAh")]
    capacity_measured_mah: Option<f64>,
}

#[derive(Serialize)]
struct PredictTiming<'a> {
    battery_id: &'a str,
    horizon: usize,
    latency: &'a LatencyStats,
    runs_ms: &'a [f64],
}

/// Forecasts one battery from one anchor cycle, `repeat` times. Each run
/// covers feature extraction from the raw cycle through the decoded
/// trajectory; the runs must agree bit for bit.
pub fn cmd_predict(args: &PredictArgs) -> Result<PredictOutcome, CliError> {
    let model = load_model(&args.model)?;
    let archive = load_archive(&args.archive)?;
    let horizon = args.horizon.unwrap_or(model.config.horizon);
    if horizon == 0 || horizon > model.config.horizon {
        return Err(CliError::Config(format!("horizon {horizon} outside 1..={} for this model", model.config.horizon)));
    }
    if args.repeat == 0 {
        return Err(CliError::Config("--repeat must be ≥ 1".into()));
    }
    let planned = args.conditions.as_deref().map(read_conditions).transpose()?;
    let b = archive
        .dataset
        .battery(&args.battery)
        .ok_or_else(|| data_err(format!("battery `{}` not in the archive", args.battery)))?;
    let anchor = args.anchor.unwrap_or_else(|| b.cycles.last().map_or(0, |c| c.cycle_index));
    let ci = b
        .cycles
        .iter()
        .position(|c| c.cycle_index == anchor)
        .ok_or_else(|| data_err(format!("`{}` has no cycle {anchor}", b.battery_id)))?;
    let future = &b.cycles[ci + 1..];
    let conditions: Vec<ConditionTriple> = match planned {
        Some(c) => c,
        None => future.iter().map(|c| c.condition).collect(),
    };
    if conditions.len() < horizon {
        return Err(data_err(format!(
            "{} future conditions for a {horizon}-cycle forecast; pass --conditions",
            conditions.len()
        )));
    }
    let conditions = conditions[..horizon].to_vec();
    let caps = b.capacities();
    let hist_len = model.samples.history_len;

    let run = || -> Result<Vec<f64>, CliError> {
        let (q, features) = cycle_sample(b, &b.cycles[ci], &model.samples).map_err(data_err)?;
        let sample = Sample {
            battery_id: b.battery_id.clone(),
            anchor_cycle: anchor,
            nominal_mah: b.nominal_capacity_mah,
            q,
            features,
            conditions: conditions.clone(),
            target_mah: Vec::new(),
            history_mah: if hist_len > 0 && ci + 1 >= hist_len { caps[ci + 1 - hist_len..=ci].to_vec() } else { Vec::new() },
        };
        Ok(predict_with_horizon(&sample, &model, horizon)?)
    };
    let soh = run()?;
    let mut runs_ms = Vec::with_capacity(args.repeat);
    for _ in 0..args.repeat {
        let t0 = Instant::now();
        let again = run()?;
        runs_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if again != soh {
            return Err(data_err("repeated inference disagreed"));
        }
    }
    let latency = latency_stats(&runs_ms).expect("at least one run");

    fs::create_dir_all(&args.out)?;
    let mut w = csv_writer(&args.out.join("trajectory.csv"))?;
    for (k, v) in soh.iter().enumerate() {
        w.serialize(TrajectoryRow {
            battery_id: b.battery_id.clone(),
            anchor_cycle: anchor,
            step: k + 1,
            soh_pred: *v,
            capacity_pred_mah: v * b.nominal_capacity_mah,
            capacity_measured_mah: if args.conditions.is_none() { future.get(k).map(|c| c.max_discharge_capacity_mah) } else { None },
        })
        .map_err(csv_io)?;
    }
    w.flush()?;
    write_json(
        &args.out.join("timing.json"),
        &PredictTiming { battery_id: &b.battery_id, horizon, latency: &latency, runs_ms: &runs_ms },
    )?;
    Ok(PredictOutcome { battery_id: b.battery_id.clone(), anchor_cycle: anchor, soh, latency })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Cubic fit over the last `window` capacities.
    Poly,
    Mlp,
}

impl std::str::FromStr for Baseline {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "poly" => Ok(Baseline::Poly),
            "mlp" => Ok(Baseline::Mlp),
            other => Err(CliError::Config(format!("unknown baseline `{other}` (poly, mlp)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub model: Option<PathBuf>,
    pub baseline: Option<Baseline>,
    pub archive: PathBuf,
    pub split: Option<PathBuf>,
    pub subset: Subset,
    /// Score against the generator's noise-free capacities.
    pub truth_targets: bool,
    pub out: PathBuf,
}

fn write_report(report: &EvalReport, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), report)?;
    let mut w = csv_writer(&out.join("batteries.csv"))?;
    w.write_record(["battery_id", "condition_tag", "n_windows", "rmse", "mape_percent", "r2", "mae"]).map_err(csv_io)?;
    for b in &report.batteries {
        let m = b.metrics;
        w.write_record([
            b.battery_id.clone(),
            b.condition_tag.clone(),
            b.n_windows.to_string(),
            m.rmse.to_string(),
            m.mape_percent.to_string(),
            m.r2.to_string(),
            m.mae.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("conditions.csv"))?;
    w.write_record(["condition_tag", "n_batteries", "rmse", "mape_percent", "r2", "mae"]).map_err(csv_io)?;
    for c in &report.conditions {
        let m = c.metrics;
        w.write_record([
            c.condition_tag.clone(),
            c.n_batteries.to_string(),
            m.rmse.to_string(),
            m.mape_percent.to_string(),
            m.r2.to_string(),
            m.mae.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn soh_series(archive: &Archive, ids: Option<&BTreeSet<String>>, truth: bool) -> Vec<(String, String, Vec<f64>)> {
    archive
        .dataset
        .batteries
        .iter()
        .filter(|b| ids.is_none_or(|ids| ids.contains(&b.battery_id)))
        .map(|b| {
            let soh = match archive.truth.as_ref().filter(|_| truth) {
                Some(t) => t.soh[&b.battery_id].clone(),
                None => b.capacities().iter().map(|c| c / b.nominal_capacity_mah).collect(),
            };
            (b.battery_id.clone(), b.condition_tag.clone(), soh)
        })
        .collect()
}

/// Metrics per battery, per condition and overall for a trained model or
/// a history baseline; writes `report.json`, `batteries.csv` and
/// `conditions.csv`.
pub fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<EvalReport, CliError> {
    if args.model.is_some() == args.baseline.is_some() {
        return Err(CliError::Config("evaluate needs exactly one of --model and --baseline".into()));
    }
    let archive = load_archive(&args.archive)?;
    if args.truth_targets && archive.truth.is_none() {
        return Err(CliError::Config("--truth-targets needs an archive with truth".into()));
    }
    let ids = subset_ids(args.split.as_deref(), args.subset)?;
    let tags: BTreeMap<String, String> =
        archive.dataset.batteries.iter().map(|b| (b.battery_id.clone(), b.condition_tag.clone())).collect();
    let t0 = Instant::now();
    let report = if let Some(path) = &args.model {
        let model = load_model(path)?;
        let mut samples = samples_for(&archive.dataset, ids.as_ref(), &model.samples)?;
        if args.truth_targets {
            truth_targets(&archive, &mut samples)?;
        }
        evaluate_model(&model, &samples, &tags)?
    } else {
        let series = soh_series(&archive, ids.as_ref(), args.truth_targets);
        let (w, l, stride) = (cfg.mlp.window, cfg.train.horizon, cfg.samples.anchor_stride);
        let rows: Vec<BatteryMetrics> = match args.baseline.expect("checked above") {
            Baseline::Poly => evaluate_history_forecaster(&series, w, l, stride, |h| poly_baseline(h, 3, l))?,
            Baseline::Mlp => {
                let split = args.split.as_deref().ok_or_else(|| CliError::Config("the MLP baseline trains on --split's training ids".into()))?;
                let train_ids = subset_ids(Some(split), Subset::Train)?;
                let train: Vec<Vec<f64>> = soh_series(&archive, train_ids.as_ref(), false).into_iter().map(|s| s.2).collect();
                let mut mlp = MlpBaseline::new(MlpConfig { horizon: l, ..cfg.mlp.clone() });
                mlp.train(&train)?;
                evaluate_history_forecaster(&series, w, l, stride, |h| mlp.forecast(h))?
            }
        };
        let (conditions, overall) = pimoe_evalkit::aggregate(&rows);
        EvalReport {
            meta: RunMeta {
                variant: format!("{:?}", args.baseline.expect("checked above")).to_lowercase(),
                horizon: l,
                n_samples: rows.iter().map(|r| r.n_windows).sum(),
                seed: cfg.train.seed,
                units: METRIC_UNITS.into(),
            },
            batteries: rows,
            conditions,
            overall,
            classification: Vec::new(),
            latency: None,
        }
    };
    write_report(&report, &args.out)?;
    write_json(&args.out.join("timing.json"), &serde_json::json!({ "evaluate_seconds": t0.elapsed().as_secs_f64() }))?;
    Ok(report)
}

fn router_model(path: &Path) -> Result<ModelState, CliError> {
    let model = load_model(path)?;
    if model.config.variant == Variant::AblateAmdpLinear {
        return Err(CliError::Config("the linear variant has no router to classify or analyze with".into()));
    }
    Ok(model)
}

fn stage_map_for(model: &ModelState, archive: &Archive, samples: &[Sample], th: StageThresholds) -> Result<StageMap, CliError> {
    if let Some(m) = model.stage_map {
        return Ok(m);
    }
    let stages = sample_stages(archive, samples, th)?;
    match calibrate_from_gates(&export_gates(model, samples)?, &stages) {
        Ok(m) | Err(EvalError::CalibrationAmbiguous(m)) => Ok(m),
        Err(e) => Err(e.into()),
    }
}

/// Labels every window by its dominant expert and tabulates them against
/// the anchor's SOH bucket; writes `labels.csv`, `confidence.csv` and
/// `stage_map.json`.
pub fn cmd_classify(
    cfg: &RunConfig,
    model_path: &Path,
    archive_dir: &Path,
    split: Option<&Path>,
    subset: Subset,
    out: &Path,
) -> Result<Vec<pimoe_evalkit::ConfidenceRow>, CliError> {
    let model = router_model(model_path)?;
    let archive = load_archive(archive_dir)?;
    let ids = subset_ids(split, subset)?;
    let samples: Vec<Sample> =
        samples_for(&archive.dataset, ids.as_ref(), &model.samples)?.into_iter().filter(|s| model.accepts(s)).collect();
    if samples.is_empty() {
        return Err(data_err("no samples to classify"));
    }
    let map = stage_map_for(&model, &archive, &samples, cfg.stages)?;
    let gates = export_gates(&model, &samples)?;
    fs::create_dir_all(out)?;
    let mut w = csv_writer(&out.join("labels.csv"))?;
    w.write_record(["battery_id", "anchor_cycle", "soh", "bucket", "dominant_expert", "label"]).map_err(csv_io)?;
    let mut pairs = Vec::with_capacity(samples.len());
    for (s, g) in samples.iter().zip(&gates) {
        let c = classify_battery(g, &map);
        let soh = anchor_soh(&archive, s).ok_or_else(|| data_err("anchor outside dataset"))?;
        let bucket = SohBucket::nearest(soh);
        pairs.push((c.label, bucket));
        w.write_record([
            s.battery_id.clone(),
            s.anchor_cycle.to_string(),
            soh.to_string(),
            bucket.percent().to_string(),
            c.dominant_expert.to_string(),
            format!("{:?}", c.label).to_lowercase(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    let table = confidence_table(&pairs);
    let mut w = csv_writer(&out.join("confidence.csv"))?;
    w.write_record(["bucket", "n", "excellent", "qualified", "scrap", "confidence_percent"]).map_err(csv_io)?;
    for r in &table {
        w.write_record([
            r.bucket.percent().to_string(),
            r.n.to_string(),
            r.excellent.to_string(),
            r.qualified.to_string(),
            r.scrap.to_string(),
            r.confidence_percent.map_or_else(String::new, |v| v.to_string()),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    write_json(&out.join("stage_map.json"), &map)?;
    Ok(table)
}

const TSNE_MAX_POINTS: usize = 2000;

/// Per-window gate weights (`gates.csv`, n×E), stage-mean weights
/// (`expert_stage.csv`), trend embeddings (`embeddings.csv`) and a t-SNE
/// map of the gate weights (`tsne.csv`, `tsne_kl.csv`).
pub fn cmd_analyze(
    cfg: &RunConfig,
    model_path: &Path,
    archive_dir: &Path,
    split: Option<&Path>,
    subset: Subset,
    out: &Path,
) -> Result<usize, CliError> {
    let model = router_model(model_path)?;
    let archive = load_archive(archive_dir)?;
    let ids = subset_ids(split, subset)?;
    let samples: Vec<Sample> =
        samples_for(&archive.dataset, ids.as_ref(), &model.samples)?.into_iter().filter(|s| model.accepts(s)).collect();
    if samples.is_empty() {
        return Err(data_err("no samples to analyze"));
    }
    let gates = export_gates(&model, &samples)?;
    let stages = sample_stages(&archive, &samples, cfg.stages)?;
    let e = model.config.amdp.experts;
    fs::create_dir_all(out)?;

    let weight_header = |lead: &[&str]| -> Vec<String> {
        lead.iter().map(|s| s.to_string()).chain((0..e).map(|j| format!("w{j}"))).collect()
    };
    let mut w = csv_writer(&out.join("gates.csv"))?;
    w.write_record(weight_header(&["sample_id", "battery_id", "anchor_cycle", "stage"])).map_err(csv_io)?;
    for (i, ((s, g), st)) in samples.iter().zip(&gates).zip(&stages).enumerate() {
        let lead = [i.to_string(), s.battery_id.clone(), s.anchor_cycle.to_string(), st.to_string()];
        w.write_record(lead.into_iter().chain(g.weights.iter().map(|v| v.to_string()))).map_err(csv_io)?;
    }
    w.flush()?;

    match stage_mean_weights(&gates, &stages) {
        Ok(means) => {
            let mut w = csv_writer(&out.join("expert_stage.csv"))?;
            w.write_record(weight_header(&["stage"])).map_err(csv_io)?;
            for (st, row) in Stage::ALL.iter().zip(&means) {
                w.write_record(std::iter::once(st.to_string()).chain(row.iter().map(|v| v.to_string()))).map_err(csv_io)?;
            }
            w.flush()?;
        }
        Err(EvalError::InsufficientData(m)) => log::warn!("expert_stage.csv skipped: {m}"),
        Err(err) => return Err(err.into()),
    }

    let emb = export_trend_embeddings(&model, &samples)?;
    let mut w = csv_writer(&out.join("embeddings.csv"))?;
    let l = model.config.horizon;
    w.write_record(["sample_id".to_string()].into_iter().chain((0..l).map(|t| format!("t{t}")))).map_err(csv_io)?;
    for (i, row) in emb.iter().enumerate() {
        w.write_record(std::iter::once(i.to_string()).chain(row.iter().map(|v| v.to_string()))).map_err(csv_io)?;
    }
    w.flush()?;

    let step = samples.len().div_ceil(TSNE_MAX_POINTS);
    if step > 1 {
        log::info!("t-SNE on every {step}-th of {} windows", samples.len());
    }
    let picked: Vec<usize> = (0..samples.len()).step_by(step).collect();
    if picked.len() >= 5 {
        let x: Vec<Vec<f64>> = picked.iter().map(|&i| gates[i].weights.clone()).collect();
        let res = tsne_embed(&x, &cfg.tsne)?;
        let mut w = csv_writer(&out.join("tsne.csv"))?;
        w.write_record(["sample_id", "x", "y", "stage"]).map_err(csv_io)?;
        for (&i, p) in picked.iter().zip(&res.embedding) {
            w.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), stages[i].to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        let mut w = csv_writer(&out.join("tsne_kl.csv"))?;
        w.write_record(["iter", "kl"]).map_err(csv_io)?;
        for (k, v) in res.kl_trace.iter().enumerate() {
            w.write_record([k.to_string(), v.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
    } else {
        log::warn!("t-SNE skipped: {} windows", picked.len());
    }
    Ok(samples.len())
}

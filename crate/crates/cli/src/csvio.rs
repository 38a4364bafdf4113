//! Flat CSV layout of a dataset: one row per curve point, one per cycle,
//! one per battery.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use pimoe_data::curve::integrate_charge;
use pimoe_data::{BatterySeries, ChargePoint, Chemistry, ConditionTriple, CycleRecord, Dataset, RelaxPoint, Stage, StageLabels};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CYCLES_CSV: &str = "cycles.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const BATTERIES_CSV: &str = "batteries.csv";
pub const TRUTH_CSV: &str = "truth.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Charge,
    Relax,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CycleRow {
    battery_id: String,
    cycle: u32,
    phase: Phase,
    t_s: f64,
    voltage_v: f64,
    current_a: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryRow {
    battery_id: String,
    cycle: u32,
    #[serde(rename = "max_discharge_capacity_mAh")]
    capacity_mah: f64,
    charge_c: f64,
    discharge_c: f64,
    temp_c: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatteryRow {
    battery_id: String,
    chemistry: Chemistry,
    #[serde(rename = "nominal_capacity_mAh")]
    nominal_mah: f64,
    v_min: f64,
    v_max: f64,
    condition_tag: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthRow {
    battery_id: String,
    cycle: u32,
    stage: Stage,
    true_soh: f64,
}

/// Generator ground truth, keyed by battery id and aligned with its cycles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub stages: StageLabels,
    pub soh: BTreeMap<String, Vec<f64>>,
}

fn ingest_err(file: &str, row: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Ingest { file: file.into(), row, msg: msg.to_string() }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes the three dataset files into `dir`.
pub fn emit_dataset(ds: &Dataset, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut cycles = writer(&dir.join(CYCLES_CSV))?;
    let mut summary = writer(&dir.join(SUMMARY_CSV))?;
    let mut batteries = writer(&dir.join(BATTERIES_CSV))?;
    for b in &ds.batteries {
        batteries
            .serialize(BatteryRow {
                battery_id: b.battery_id.clone(),
                chemistry: b.chemistry,
                nominal_mah: b.nominal_capacity_mah,
                v_min: b.cutoff_voltage_v.0,
                v_max: b.cutoff_voltage_v.1,
                condition_tag: b.condition_tag.clone(),
            })
            .map_err(csv_io)?;
        for c in &b.cycles {
            let row = |phase, t_s, voltage_v, current_a| CycleRow {
                battery_id: b.battery_id.clone(),
                cycle: c.cycle_index,
                phase,
                t_s,
                voltage_v,
                current_a,
            };
            for p in &c.charge_points {
                cycles.serialize(row(Phase::Charge, p.time_s, p.voltage_v, p.current_a)).map_err(csv_io)?;
            }
            for p in &c.relax_points {
                cycles.serialize(row(Phase::Relax, p.time_s, p.voltage_v, 0.0)).map_err(csv_io)?;
            }
            summary
                .serialize(SummaryRow {
                    battery_id: b.battery_id.clone(),
                    cycle: c.cycle_index,
                    capacity_mah: c.max_discharge_capacity_mah,
                    charge_c: c.condition.charge_c_rate,
                    discharge_c: c.condition.discharge_c_rate,
                    temp_c: c.condition.temperature_c,
                })
                .map_err(csv_io)?;
        }
    }
    for w in [&mut cycles, &mut summary, &mut batteries] {
        w.flush()?;
    }
    Ok(())
}

pub fn emit_truth(truth: &Truth, dir: &Path) -> Result<(), CliError> {
    let mut w = writer(&dir.join(TRUTH_CSV))?;
    for (id, stages) in &truth.stages {
        let soh = truth.soh.get(id).map(Vec::as_slice).unwrap_or(&[]);
        for (k, (stage, s)) in stages.iter().zip(soh).enumerate() {
            w.serialize(TruthRow { battery_id: id.clone(), cycle: k as u32 + 1, stage: *stage, true_soh: *s })
                .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Deserializes every row, reporting failures with their 1-based line.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(u64, T)>, CliError> {
    let name = path.display().to_string();
    let mut text = String::new();
    File::open(path)
        .map_err(|e| ingest_err(&name, 0, e))?
        .read_to_string(&mut text)
        .map_err(|e| ingest_err(&name, 0, format!("not UTF-8 text: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ingest_err(&name, 1, e))?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest_err(&name, e.position().map_or(0, |p| p.line()), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize(Some(&headers)).map_err(|e| ingest_err(&name, line, e))?;
        out.push((line, row));
    }
    if out.is_empty() {
        return Err(ingest_err(&name, 1, "no data rows"));
    }
    Ok(out)
}

#[derive(Default)]
struct CurveBuf {
    charge: Vec<(f64, f64, f64)>,
    relax: Vec<(f64, f64)>,
    first_row: u64,
}

/// Reads the three dataset files back into a validated dataset.
pub fn ingest_dataset(
    cycles_csv: &Path,
    summary_csv: &Path,
    batteries_csv: &Path,
    name: &str,
    tag: &str,
) -> Result<Dataset, CliError> {
    let bname = batteries_csv.display().to_string();
    let sname = summary_csv.display().to_string();
    let cname = cycles_csv.display().to_string();

    let mut order = Vec::new();
    let mut meta = BTreeMap::new();
    for (line, r) in read_rows::<BatteryRow>(batteries_csv)? {
        if !(r.nominal_mah > 0.0) || !(r.v_min < r.v_max) {
            return Err(ingest_err(&bname, line, "nominal capacity must be positive and v_min below v_max"));
        }
        if meta.contains_key(&r.battery_id) {
            return Err(ingest_err(&bname, line, format!("battery `{}` listed twice", r.battery_id)));
        }
        order.push(r.battery_id.clone());
        meta.insert(r.battery_id.clone(), r);
    }

    let mut curves: BTreeMap<(String, u32), CurveBuf> = BTreeMap::new();
    for (line, r) in read_rows::<CycleRow>(cycles_csv)? {
        if !meta.contains_key(&r.battery_id) {
            return Err(ingest_err(&cname, line, format!("battery `{}` not in {BATTERIES_CSV}", r.battery_id)));
        }
        if ![r.t_s, r.voltage_v, r.current_a].iter().all(|v| v.is_finite()) {
            return Err(ingest_err(&cname, line, "non-finite value"));
        }
        let buf = curves.entry((r.battery_id, r.cycle)).or_insert_with(|| CurveBuf { first_row: line, ..CurveBuf::default() });
        match r.phase {
            Phase::Charge => buf.charge.push((r.t_s, r.voltage_v, r.current_a)),
            Phase::Relax => buf.relax.push((r.t_s, r.voltage_v)),
        }
    }

    let mut per_battery: BTreeMap<String, Vec<CycleRecord>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (line, r) in read_rows::<SummaryRow>(summary_csv)? {
        if !meta.contains_key(&r.battery_id) {
            return Err(ingest_err(&sname, line, format!("battery `{}` not in {BATTERIES_CSV}", r.battery_id)));
        }
        let key = (r.battery_id.clone(), r.cycle);
        if !seen.insert(key.clone()) {
            return Err(ingest_err(&sname, line, format!("cycle {} of `{}` repeated", r.cycle, r.battery_id)));
        }
        if !(r.capacity_mah > 0.0) {
            return Err(ingest_err(&sname, line, "capacity must be positive"));
        }
        let condition = ConditionTriple::new(r.charge_c, r.discharge_c, r.temp_c).map_err(|e| ingest_err(&sname, line, e))?;
        let buf = curves
            .remove(&key)
            .ok_or_else(|| ingest_err(&sname, line, format!("no curve rows for cycle {} of `{}`", r.cycle, r.battery_id)))?;
        let times: Vec<f64> = buf.charge.iter().map(|p| p.0).collect();
        let currents: Vec<f64> = buf.charge.iter().map(|p| p.2).collect();
        let cumulative = integrate_charge(&times, &currents);
        per_battery.entry(r.battery_id).or_default().push(CycleRecord {
            cycle_index: r.cycle,
            charge_points: buf
                .charge
                .iter()
                .zip(&cumulative)
                .map(|(&(time_s, voltage_v, current_a), &cumulative_mah)| ChargePoint {
                    time_s,
                    voltage_v,
                    current_a,
                    cumulative_mah,
                })
                .collect(),
            relax_points: buf.relax.iter().map(|&(time_s, voltage_v)| RelaxPoint { time_s, voltage_v }).collect(),
            max_discharge_capacity_mah: r.capacity_mah,
            condition,
        });
    }
    if let Some(((id, cycle), buf)) = curves.into_iter().next() {
        return Err(ingest_err(&cname, buf.first_row, format!("cycle {cycle} of `{id}` has no summary row")));
    }

    let mut batteries = Vec::with_capacity(order.len());
    for id in order {
        let m = &meta[&id];
        let mut cycles = per_battery.remove(&id).unwrap_or_default();
        cycles.sort_by_key(|c| c.cycle_index);
        batteries.push(BatterySeries {
            battery_id: id.clone(),
            chemistry: m.chemistry,
            nominal_capacity_mah: m.nominal_mah,
            cutoff_voltage_v: (m.v_min, m.v_max),
            condition_tag: m.condition_tag.clone(),
            cycles,
        });
    }
    let ds = Dataset { name: name.into(), condition_tag: tag.into(), batteries };
    ds.validate().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(ds)
}

/// Reads generator truth; rows must list each battery's cycles in order
/// starting at 1.
pub fn ingest_truth(path: &Path) -> Result<Truth, CliError> {
    let name = path.display().to_string();
    let mut truth = Truth::default();
    for (line, r) in read_rows::<TruthRow>(path)? {
        let stages = truth.stages.entry(r.battery_id.clone()).or_default();
        if r.cycle as usize != stages.len() + 1 {
            return Err(ingest_err(&name, line, format!("expected cycle {} of `{}`", stages.len() + 1, r.battery_id)));
        }
        stages.push(r.stage);
        truth.soh.entry(r.battery_id).or_default().push(r.true_soh);
    }
    Ok(truth)
}

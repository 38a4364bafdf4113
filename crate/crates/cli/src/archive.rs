//! Ingested dataset on disk: `dataset.json`, `manifest.json` with the
//! cleaning log, and `truth.json` when generator labels came along.

use std::fs;
use std::path::Path;

use pimoe_data::Dataset;
use pimoe_preprocess::{clean_cycles, CleanLog};
use serde::{Deserialize, Serialize};

use crate::csvio::Truth;
use crate::CliError;

pub const ARCHIVE_FORMAT: &str = "pimoe-archive-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub name: String,
    pub n_batteries: usize,
    pub n_cycles: usize,
    pub removed: Vec<CleanLog>,
    pub has_truth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub dataset: Dataset,
    pub manifest: Manifest,
    pub truth: Option<Truth>,
}

/// Cleans every battery and keeps truth aligned with the surviving cycles.
pub fn clean_dataset(raw: Dataset, truth: Option<Truth>) -> Result<Archive, CliError> {
    let mut batteries = Vec::with_capacity(raw.batteries.len());
    let mut removed = Vec::new();
    let mut truth = truth;
    for b in &raw.batteries {
        let (clean, log) = clean_cycles(b).map_err(|e| CliError::Data(e.to_string()))?;
        if let Some(t) = truth.as_mut() {
            let gone: std::collections::BTreeSet<u32> = log.removed.iter().map(|r| r.cycle_index).collect();
            let keep: Vec<bool> = b.cycles.iter().map(|c| !gone.contains(&c.cycle_index)).collect();
            let (Some(st), Some(soh)) = (t.stages.get_mut(&b.battery_id), t.soh.get_mut(&b.battery_id)) else {
                return Err(CliError::Data(format!("no truth rows for `{}`", b.battery_id)));
            };
            if st.len() != keep.len() {
                return Err(CliError::Data(format!(
                    "`{}` has {} truth rows for {} cycles",
                    b.battery_id,
                    st.len(),
                    keep.len()
                )));
            }
            let mut k = keep.iter();
            st.retain(|_| *k.next().expect("aligned"));
            let mut k = keep.iter();
            soh.retain(|_| *k.next().expect("aligned"));
        }
        if !log.removed.is_empty() {
            log::info!("{}: removed {} cycles", b.battery_id, log.removed.len());
            removed.push(log);
        }
        batteries.push(clean);
    }
    let dataset = Dataset { batteries, ..raw };
    let manifest = Manifest {
        format: ARCHIVE_FORMAT.into(),
        name: dataset.name.clone(),
        n_batteries: dataset.batteries.len(),
        n_cycles: dataset.batteries.iter().map(|b| b.cycles.len()).sum(),
        removed,
        has_truth: truth.is_some(),
    };
    Ok(Archive { dataset, manifest, truth })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_archive(a: &Archive, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("dataset.json"), &a.dataset)?;
    write_json(&dir.join("manifest.json"), &a.manifest)?;
    let truth = dir.join("truth.json");
    match &a.truth {
        Some(t) => write_json(&truth, t)?,
        None if truth.exists() => fs::remove_file(truth)?,
        None => {}
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_archive(dir: &Path) -> Result<Archive, CliError> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != ARCHIVE_FORMAT {
        return Err(CliError::Data(format!("archive format `{}` is not {ARCHIVE_FORMAT}", manifest.format)));
    }
    let dataset: Dataset = read_json(&dir.join("dataset.json"))?;
    dataset.validate().map_err(|e| CliError::Data(e.to_string()))?;
    let truth = if manifest.has_truth { Some(read_json(&dir.join("truth.json"))?) } else { None };
    Ok(Archive { dataset, manifest, truth })
}

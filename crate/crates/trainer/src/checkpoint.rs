use std::fs;
use std::path::Path;

use diffkernel::{AdamState, ParamManifest, ParamSet};
use pimoe_data::StageMap;
use pimoe_fornn::ConditionScaler;
use pimoe_preprocess::{NormStats, SampleConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::model::{ModelState, MODEL_FORMAT_VERSION};
use crate::train::EpochStats;
use crate::{Result, TrainError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PIMOECK1";

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub adam: Option<AdamState>,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn model_only(model: ModelState) -> Self {
        Self { model, adam: None, rng: None }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    config: TrainConfig,
    samples: SampleConfig,
    norm: NormStats,
    scaler: ConditionScaler,
    stage_map: Option<StageMap>,
    history: Vec<EpochStats>,
    params: ParamManifest,
    adam: Option<AdamState>,
    rng: Option<RngState>,
}

/// Layout: magic, little-endian `u64` manifest length, JSON manifest,
/// parameter blob, then the SHA-256 of everything before it.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let m = &ck.model;
    let (params, blob) = m.params.to_manifest_blob();
    let manifest = Manifest {
        version: m.version,
        config: m.config.clone(),
        samples: m.samples.clone(),
        norm: m.norm.clone(),
        scaler: m.scaler,
        stage_map: m.stage_map,
        history: m.history.clone(),
        params,
        adam: ck.adam.clone(),
        rng: ck.rng,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| TrainError::Io(e.to_string()))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + blob.len() + 32);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&blob);
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 + 32 {
        return Err(TrainError::ChecksumError(format!("{} bytes is too short", bytes.len())));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(TrainError::ChecksumError("content does not match its digest".into()));
    }
    if &body[..8] != CHECKPOINT_MAGIC {
        return Err(TrainError::IncompatibleCheckpoint("unknown file magic".into()));
    }
    let len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let rest = &body[16..];
    if len > rest.len() {
        return Err(TrainError::ChecksumError(format!("manifest length {len} beyond file")));
    }
    let (json, blob) = rest.split_at(len);
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| TrainError::IncompatibleCheckpoint(e.to_string()))?;
    if manifest.version != MODEL_FORMAT_VERSION {
        return Err(TrainError::IncompatibleCheckpoint(format!(
            "model format {} (this build reads {MODEL_FORMAT_VERSION})",
            manifest.version
        )));
    }
    let params = ParamSet::from_manifest_blob(&manifest.params, blob)
        .map_err(|e| TrainError::IncompatibleCheckpoint(e.to_string()))?;
    Ok(Checkpoint {
        model: ModelState {
            version: manifest.version,
            config: manifest.config,
            samples: manifest.samples,
            params,
            norm: manifest.norm,
            scaler: manifest.scaler,
            stage_map: manifest.stage_map,
            history: manifest.history,
        },
        adam: manifest.adam,
        rng: manifest.rng,
    })
}

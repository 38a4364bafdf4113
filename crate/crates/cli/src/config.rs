use std::path::{Path, PathBuf};

use pimoe_data::SplitRatios;
use pimoe_evalkit::{MlpConfig, TsneConfig};
use pimoe_preprocess::SampleConfig;
use pimoe_synthgen::SynthConfig;
use pimoe_trainer::{TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "PIMOE_SEED";

/// SOH cut points used to label stages when no generator truth exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageThresholds {
    pub early_above: f64,
    pub late_below: f64,
}

impl Default for StageThresholds {
    fn default() -> Self {
        Self { early_above: 0.95, late_below: 0.85 }
    }
}

/// One JSON document drives every command; each reads the sections it
/// needs. `seed`, when present, replaces the seeds inside the sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub train: TrainConfig,
    pub samples: SampleConfig,
    pub split: SplitRatios,
    pub train_fraction: f64,
    pub stages: StageThresholds,
    pub tsne: TsneConfig,
    pub mlp: MlpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dataset: None,
            output_dir: None,
            synth: None,
            train: TrainConfig::default(),
            samples: SampleConfig::default(),
            split: SplitRatios::default(),
            train_fraction: 1.0,
            stages: StageThresholds::default(),
            tsne: TsneConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Applies the seed override from the environment, then the top-level
    /// seed, and validates every section.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not a u64")))?;
            self.seed = Some(seed);
        }
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.mlp.seed = seed;
            self.tsne.seed = seed;
            if let Some(s) = self.synth.as_mut() {
                s.seed = seed;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.samples.horizon != self.train.horizon {
            return bad(format!("samples.horizon {} differs from train.horizon {}", self.samples.horizon, self.train.horizon));
        }
        if self.samples.n_q == 0 || self.samples.anchor_stride == 0 {
            return bad("samples.n_q and samples.anchor_stride must be ≥ 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction {} outside (0, 1]", self.train_fraction));
        }
        let r = self.split;
        if !(0.0..1.0).contains(&r.test) || !(0.0..1.0).contains(&r.val) || r.test + r.val >= 1.0 {
            return bad(format!("split ratios {r:?} must be in [0, 1) and sum below 1"));
        }
        if !(self.stages.late_below < self.stages.early_above) {
            return bad("stages.late_below must be below stages.early_above".into());
        }
        if !(self.tsne.perplexity > 0.0) || self.tsne.iters == 0 {
            return bad("tsne.perplexity and tsne.iters must be positive".into());
        }
        if let Some(s) = &self.synth {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Command-line names of the model variants.
pub fn parse_variant(name: &str) -> Result<Variant, CliError> {
    match name {
        "pimoe" => Ok(Variant::Standard),
        "pimoe-linear" => Ok(Variant::AblateAmdpLinear),
        "pimoe-wofo" => Ok(Variant::AblateFornnPlainRnn),
        "pimoe-history" => Ok(Variant::HistoryMode),
        other => Err(CliError::Config(format!(
            "unknown variant `{other}` (pimoe, pimoe-linear, pimoe-wofo, pimoe-history)"
        ))),
    }
}

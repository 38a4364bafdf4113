use pimoe_amdp::AmdpConfig;
use pimoe_fornn::FornnConfig;
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    /// Router and experts both read the recent capacity history.
    HistoryMode,
    /// One affine map from charge vector to trend replaces the mixture.
    AblateAmdpLinear,
    /// The decoder sees the trend only.
    AblateFornnPlainRnn,
}

impl Variant {
    pub fn has_router(self) -> bool {
        self != Variant::AblateAmdpLinear
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub horizon: usize,
    pub amdp: AmdpConfig,
    pub fornn: FornnConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Capacity points the history-mode router reads.
    pub history_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            amdp: AmdpConfig::default(),
            fornn: FornnConfig::default(),
            lr: 1e-3,
            weight_decay: 0.0,
            batch_size: 64,
            alpha: 0.75,
            beta: 0.25,
            eps: 10.0,
            epochs: 200,
            patience: 20,
            seed: 0,
            variant: Variant::Standard,
            history_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.horizon == 0 || self.batch_size == 0 || self.history_window == 0 {
            return bad("horizon, batch size and history window must be ≥ 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {}", self.lr));
        }
        if !(0.0..=1e-4).contains(&self.weight_decay) {
            return bad(format!("weight decay {} outside [0, 1e-4]", self.weight_decay));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return bad(format!("loss weights α={} β={}", self.alpha, self.beta));
        }
        if !(self.eps > 0.0) {
            return bad(format!("ε = {}", self.eps));
        }
        if !(0.0..1.0).contains(&self.fornn.dropout) || self.fornn.hidden == 0 {
            return bad(format!("decoder hidden {} dropout {}", self.fornn.hidden, self.fornn.dropout));
        }
        self.amdp.validate().map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }

    /// Decoder settings after applying the variant.
    pub fn effective_fornn(&self) -> FornnConfig {
        FornnConfig { use_conditions: self.variant != Variant::AblateFornnPlainRnn, ..self.fornn }
    }
}

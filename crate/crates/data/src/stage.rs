use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Coarse position along a cell's degradation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Early,
    Mid,
    Late,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Early, Stage::Mid, Stage::Late];

    /// Bucketing by state of health when no generator labels exist.
    pub fn from_soh(soh: f64, early_above: f64, late_below: f64) -> Stage {
        if soh >= early_above {
            Stage::Early
        } else if soh < late_below {
            Stage::Late
        } else {
            Stage::Mid
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Early => "early",
            Stage::Mid => "mid",
            Stage::Late => "late",
        })
    }
}

/// Stage per cycle, keyed by battery id; cycle `k` (1-based) is entry `k-1`.
pub type StageLabels = BTreeMap<String, Vec<Stage>>;

/// Which expert stands for which stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMap {
    pub early: usize,
    pub mid: usize,
    pub late: usize,
}

impl StageMap {
    pub fn expert(&self, stage: Stage) -> usize {
        match stage {
            Stage::Early => self.early,
            Stage::Mid => self.mid,
            Stage::Late => self.late,
        }
    }

    pub fn is_distinct(&self) -> bool {
        self.early != self.mid && self.mid != self.late && self.early != self.late
    }
}

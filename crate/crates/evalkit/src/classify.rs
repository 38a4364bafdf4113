use pimoe_amdp::GateOutput;
use pimoe_data::{Stage, StageMap};
use serde::{Deserialize, Serialize};

use crate::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Excellent,
    Qualified,
    Scrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ClassLabel,
    pub dominant_expert: usize,
    pub weights: Vec<f64>,
}

/// Mean gate weight of each expert within each stage.
pub fn stage_mean_weights(gates: &[GateOutput], stages: &[Stage]) -> Result<[Vec<f64>; 3]> {
    if gates.len() != stages.len() {
        return Err(EvalError::Shape(format!("{} gates for {} stage labels", gates.len(), stages.len())));
    }
    let e = gates.first().map_or(0, |g| g.weights.len());
    let mut sums = [vec![0.0; e], vec![0.0; e], vec![0.0; e]];
    let mut counts = [0usize; 3];
    for (g, s) in gates.iter().zip(stages) {
        let k = *s as usize;
        counts[k] += 1;
        for (a, w) in sums[k].iter_mut().zip(&g.weights) {
            *a += w;
        }
    }
    for (k, stage) in Stage::ALL.iter().enumerate() {
        if counts[k] == 0 {
            return Err(EvalError::InsufficientData(format!("no calibration samples in the {stage} stage")));
        }
        sums[k].iter_mut().for_each(|v| *v /= counts[k] as f64);
    }
    Ok(sums)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Maps each stage to the expert with the highest mean gate weight over
/// that stage's samples. Two stages sharing an expert is reported as
/// `CalibrationAmbiguous`, carrying the proposed map so a caller may still
/// accept it or override it.
pub fn calibrate_from_gates(gates: &[GateOutput], stages: &[Stage]) -> Result<StageMap> {
    let [early, mid, late] = stage_mean_weights(gates, stages)?;
    let map = StageMap { early: argmax(&early), mid: argmax(&mid), late: argmax(&late) };
    if map.is_distinct() {
        Ok(map)
    } else {
        Err(EvalError::CalibrationAmbiguous(map))
    }
}

/// Early-stage expert dominant → Excellent, late-stage → Scrap, anything
/// else → Qualified.
pub fn classify_battery(gate: &GateOutput, map: &StageMap) -> Classification {
    let dominant = gate.dominant();
    let label = if dominant == map.early {
        ClassLabel::Excellent
    } else if dominant == map.late {
        ClassLabel::Scrap
    } else {
        ClassLabel::Qualified
    };
    Classification { label, dominant_expert: dominant, weights: gate.weights.clone() }
}

/// Ground-truth health bucket of a tested battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SohBucket {
    Soh95,
    Soh85,
    Soh75,
}

impl SohBucket {
    pub const ALL: [SohBucket; 3] = [SohBucket::Soh95, SohBucket::Soh85, SohBucket::Soh75];

    pub fn percent(self) -> u32 {
        match self {
            SohBucket::Soh95 => 95,
            SohBucket::Soh85 => 85,
            SohBucket::Soh75 => 75,
        }
    }

    /// Closest bucket to a state of health given as a fraction.
    pub fn nearest(soh: f64) -> SohBucket {
        let pct = soh * 100.0;
        if pct >= 90.0 {
            SohBucket::Soh95
        } else if pct >= 80.0 {
            SohBucket::Soh85
        } else {
            SohBucket::Soh75
        }
    }

    /// Label a correct classifier gives this bucket; the middle bucket has
    /// none.
    pub fn expected(self) -> Option<ClassLabel> {
        match self {
            SohBucket::Soh95 => Some(ClassLabel::Excellent),
            SohBucket::Soh85 => None,
            SohBucket::Soh75 => Some(ClassLabel::Scrap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub bucket: SohBucket,
    pub n: usize,
    pub excellent: usize,
    pub qualified: usize,
    pub scrap: usize,
    /// Share receiving the bucket's expected label, in percent.
    pub confidence_percent: Option<f64>,
}

/// One row per non-empty bucket, in 95/85/75 order.
pub fn confidence_table(rows: &[(ClassLabel, SohBucket)]) -> Vec<ConfidenceRow> {
    SohBucket::ALL
        .iter()
        .filter_map(|&bucket| {
            let labels: Vec<ClassLabel> = rows.iter().filter(|r| r.1 == bucket).map(|r| r.0).collect();
            if labels.is_empty() {
                return None;
            }
            let count = |l| labels.iter().filter(|&&x| x == l).count();
            let n = labels.len();
            Some(ConfidenceRow {
                bucket,
                n,
                excellent: count(ClassLabel::Excellent),
                qualified: count(ClassLabel::Qualified),
                scrap: count(ClassLabel::Scrap),
                confidence_percent: bucket.expected().map(|l| 100.0 * count(l) as f64 / n as f64),
            })
        })
        .collect()
}

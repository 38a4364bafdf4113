use std::collections::BTreeMap;

use pimoe_preprocess::Sample;
use pimoe_trainer::{predict_trajectory, ModelState};
use serde::{Deserialize, Serialize};

use crate::classify::ConfidenceRow;
use crate::metrics::{compute_metrics, mean_metrics, MetricTriple};
use crate::{EvalError, Result};

pub const METRIC_UNITS: &str = "RMSE and MAE in percent of nominal capacity (SOH %); MAPE in percent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

pub fn latency_stats(ms: &[f64]) -> Option<LatencyStats> {
    if ms.is_empty() {
        return None;
    }
    let mut v = ms.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let p95 = v[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Some(LatencyStats { n, median_ms: median, mean_ms: v.iter().sum::<f64>() / n as f64, p95_ms: p95, max_ms: v[n - 1] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryMetrics {
    pub battery_id: String,
    pub condition_tag: String,
    pub n_windows: usize,
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub condition_tag: String,
    pub n_batteries: usize,
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub variant: String,
    pub horizon: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub batteries: Vec<BatteryMetrics>,
    pub conditions: Vec<ConditionMetrics>,
    pub overall: Option<MetricTriple>,
    pub classification: Vec<ConfidenceRow>,
    pub latency: Option<LatencyStats>,
}

/// Metrics of one battery over all of its forecast windows, pooled.
fn pooled(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<MetricTriple> {
    let p: Vec<f64> = pred.iter().flatten().map(|v| 100.0 * v).collect();
    let t: Vec<f64> = truth.iter().flatten().map(|v| 100.0 * v).collect();
    compute_metrics(&p, &t)
}

/// Condition rows and the overall row as plain means of battery rows.
pub fn aggregate(batteries: &[BatteryMetrics]) -> (Vec<ConditionMetrics>, Option<MetricTriple>) {
    let mut groups: BTreeMap<&str, Vec<MetricTriple>> = BTreeMap::new();
    for b in batteries {
        groups.entry(&b.condition_tag).or_default().push(b.metrics);
    }
    let conditions = groups
        .into_iter()
        .filter_map(|(tag, rows)| {
            Some(ConditionMetrics { condition_tag: tag.into(), n_batteries: rows.len(), metrics: mean_metrics(&rows)? })
        })
        .collect();
    let all: Vec<MetricTriple> = batteries.iter().map(|b| b.metrics).collect();
    (conditions, mean_metrics(&all))
}

/// Per-battery metrics of the model's forecasts; `tags` maps battery id to
/// condition tag.
pub fn evaluate_model(model: &ModelState, samples: &[Sample], tags: &BTreeMap<String, String>) -> Result<EvalReport> {
    let mut by_battery: BTreeMap<&str, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    let mut used = 0;
    for s in samples.iter().filter(|s| model.accepts(s)) {
        let pred = predict_trajectory(s, model)?;
        let e = by_battery.entry(&s.battery_id).or_default();
        e.0.push(pred);
        e.1.push(s.target_soh());
        used += 1;
    }
    if by_battery.is_empty() {
        return Err(EvalError::InsufficientData("no samples to evaluate".into()));
    }
    let batteries = by_battery
        .into_iter()
        .map(|(id, (p, t))| {
            Ok(BatteryMetrics {
                battery_id: id.into(),
                condition_tag: tags.get(id).cloned().unwrap_or_default(),
                n_windows: p.len(),
                metrics: pooled(&p, &t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (conditions, overall) = aggregate(&batteries);
    Ok(EvalReport {
        meta: RunMeta {
            variant: format!("{:?}", model.config.variant),
            horizon: model.config.horizon,
            n_samples: used,
            seed: model.config.seed,
            units: METRIC_UNITS.into(),
        },
        batteries,
        conditions,
        overall,
        classification: Vec::new(),
        latency: None,
    })
}

/// Runs a history-window forecaster over every battery: anchors every
/// `stride` cycles, each reading `window` capacities and forecasting
/// `horizon`. Capacities are in SOH.
pub fn evaluate_history_forecaster<F>(
    series: &[(String, String, Vec<f64>)],
    window: usize,
    horizon: usize,
    stride: usize,
    forecast: F,
) -> Result<Vec<BatteryMetrics>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if stride == 0 {
        return Err(EvalError::InvalidArgument("stride must be ≥ 1".into()));
    }
    let mut out = Vec::new();
    for (id, tag, caps) in series {
        if caps.len() < window + horizon {
            continue;
        }
        let (mut preds, mut truths) = (Vec::new(), Vec::new());
        for t in (window..=caps.len() - horizon).step_by(stride) {
            preds.push(forecast(&caps[t - window..t])?);
            truths.push(caps[t..t + horizon].to_vec());
        }
        out.push(BatteryMetrics {
            battery_id: id.clone(),
            condition_tag: tag.clone(),
            n_windows: preds.len(),
            metrics: pooled(&preds, &truths)?,
        });
    }
    if out.is_empty() {
        return Err(EvalError::InsufficientData(format!("no series longer than {}", window + horizon)));
    }
    Ok(out)
}

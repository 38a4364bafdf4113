#![allow(dead_code)]

use pimoe_data::{ChargeVector, ConditionTriple};
use pimoe_preprocess::{build_samples, Sample, SampleConfig};
use pimoe_synthgen::{gen_fleet, SynthConfig};
use pimoe_trainer::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A hand-built sample with random inputs and a gently fading target.
pub fn random_sample(rng: &mut impl Rng, n_q: usize, horizon: usize, id: usize) -> Sample {
    let nominal = 2000.0;
    let mut q = vec![0.0];
    for _ in 0..n_q {
        let last = *q.last().unwrap();
        q.push(last + rng.random_range(5.0..40.0));
    }
    let start = rng.random_range(0.8..1.0);
    Sample {
        battery_id: format!("T{id}"),
        anchor_cycle: 10 + id as u32,
        nominal_mah: nominal,
        q: ChargeVector { values_mah: q, v_start_v: 3.6, v_end_v: 4.2 },
        features: (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
        conditions: (0..horizon)
            .map(|_| ConditionTriple {
                charge_c_rate: rng.random_range(0.5..3.0),
                discharge_c_rate: rng.random_range(1.0..3.0),
                temperature_c: rng.random_range(20.0..45.0),
            })
            .collect(),
        target_mah: (0..horizon).map(|t| nominal * (start - 0.001 * t as f64)).collect(),
        history_mah: (0..12).map(|t| nominal * (start + 0.001 * (12 - t) as f64)).collect(),
    }
}

pub fn tiny_config(experts: usize, top_k: usize, horizon: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig { horizon, seed, batch_size: 4, ..TrainConfig::default() };
    cfg.amdp.experts = experts;
    cfg.amdp.top_k = top_k;
    cfg.amdp.expert_hidden = 4;
    cfg.fornn.hidden = 4;
    cfg
}

pub fn tiny_samples(seed: u64, n: usize, n_q: usize, horizon: usize) -> (Vec<Sample>, SampleConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|i| random_sample(&mut rng, n_q, horizon, i)).collect();
    (samples, SampleConfig { horizon, n_q, ..SampleConfig::default() })
}

/// Samples from a small synthetic fleet, split by battery.
pub fn fleet_samples(cfg: &SynthConfig, n_train: usize, sc: &SampleConfig) -> (Vec<Sample>, Vec<Sample>) {
    let fleet = gen_fleet(cfg).unwrap();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, b) in fleet.dataset.batteries.iter().enumerate() {
        let s = build_samples(b, sc).unwrap();
        if i < n_train {
            train.extend(s);
        } else {
            test.extend(s);
        }
    }
    (train, test)
}

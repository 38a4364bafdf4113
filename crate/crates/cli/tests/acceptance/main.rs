//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test -p pimoe-cli --test acceptance -- 3 14`.

mod numeric;
mod pipeline;

use std::process::ExitCode;
use std::time::Instant;

pub enum Status {
    Pass,
    Fail,
    Skip,
}

pub struct Verdict {
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    pub fn check(ok: bool, detail: impl Into<String>) -> Self {
        Self { status: if ok { Status::Pass } else { Status::Fail }, detail: detail.into() }
    }

    pub fn skip(detail: impl Into<String>) -> Self {
        Self { status: Status::Skip, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, fn(&mut pipeline::Shared) -> Verdict);

const CRITERIA: [Criterion; 14] = [
    (1, "gradient correctness", |_| numeric::gradients()),
    (2, "gating invariants", |_| numeric::gating()),
    (3, "loss components", |_| numeric::loss_components()),
    (4, "metric oracles", |_| numeric::metrics()),
    (5, "feature oracles", |_| numeric::features()),
    (6, "end-to-end accuracy", pipeline::end_to_end),
    (7, "condition sensitivity", |_| pipeline::condition_sensitivity()),
    (8, "expert specialization", |_| pipeline::specialization()),
    (9, "baselines", |_| numeric::baselines()),
    (10, "real-data accuracy", |_| pipeline::real_data()),
    (11, "inference latency", pipeline::latency),
    (12, "horizon robustness", |_| pipeline::horizon_robustness()),
    (13, "t-SNE separation", |_| numeric::tsne()),
    (14, "checkpoint round trip", pipeline::checkpoint_round_trip),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = pipeline::Shared::default();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let v = run(&mut shared);
        let tag = match v.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("criterion {id:>2} {tag} {name}: {} [{:.1} s]", v.detail, t0.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

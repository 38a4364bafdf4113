//! Domain types for battery cycling data: conditions, cycles, batteries,
//! datasets, train/val/test splits and the monotone charge-curve helpers
//! every downstream stage shares.

pub mod curve;
pub mod error;
pub mod seed;
pub mod split;
pub mod stage;
pub mod summary;
pub mod types;

pub use curve::{ChargeVector, RelaxVector};
pub use error::{DataError, Result};
pub use seed::derive_seed;
pub use split::{partition_dataset, partition_dataset_with, SplitRatios, SplitSpec};
pub use stage::{Stage, StageLabels, StageMap};
pub use summary::{dataset_summary, SummaryRow};
pub use types::{
    BatterySeries, ChargePoint, Chemistry, ConditionTriple, CycleRecord, Dataset, RelaxPoint,
};

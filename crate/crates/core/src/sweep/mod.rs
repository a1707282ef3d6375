//! Coupling grids, the append-only record store, resume and export.

mod plan;
mod run;
mod store;

pub use plan::{grid_points, grid_value, partition_name, SweepPlan, DEFAULT_GRID_STEP};
pub use run::{run_plan, RunOptions, RunSummary};
pub use store::{
    check_unique, coupling_nano, load_series, read_csv, sorted, write_csv, FailedPoint, RecordKey, RecordStore,
    SweepRecord,
};

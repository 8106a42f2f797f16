//! Discrete-event simulation of a source device offloading onto nearby
//! devices and remote clouds.
//!
//! Devices beacon their presence; an app run walks its call graph in
//! topological order, choosing an executor for each method with the
//! configured decision mode, and charges decision, transfer and compute
//! time to the simulated clock. Devices may leave mid-method, in which case
//! the method is rerun on the launching device.

mod engine;
pub mod events;
pub mod metrics;
pub mod neighbors;

pub use engine::{rebase, run_scenario};
pub use metrics::{CacheOutcome, DeviceStat, MessageCounts, MethodStat, MetricsRecord, RunRecord, StepRecord};
pub use neighbors::NeighborTable;

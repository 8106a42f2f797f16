//! Call-graph offloading decisions for groups of nearby devices.
//!
//! An application is a DAG of methods ([`graph`]). The devices that can run
//! them and the links between them form a topology ([`context`]). Every
//! assignment of methods to devices is a path through a layered graph
//! ([`expand`]), which an ant-colony search explores ([`aco`]). Decisions
//! are remembered and shared between devices ([`cache`]), and the whole
//! system runs inside a seeded discrete-event simulator ([`sim`]).

// `!(x > 0.0)` style checks are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aco;
pub mod cache;
pub mod context;
pub mod error;
pub mod expand;
pub mod experiment;
pub mod graph;
pub mod scenario;
pub mod sim;

pub use aco::{aco_partition, brute_force_partition, decide_next, AcoParams, Partition};
pub use cache::{CachePolicies, DecisionCache, ExecutionTrail, MergePolicy};
pub use context::{DeviceId, DeviceProfile, Link, SpcTopology};
pub use error::{AcoError, ContextError, ExpandError, GraphError};
pub use expand::{expand, Assignment, CostModel, EdgeCost, ExpandedGraph};
pub use graph::{benchmark, Benchmark, CallGraph, MethodId, MethodNode};
pub use scenario::{DecisionMode, ScenarioConfig};
pub use sim::{run_scenario, MetricsRecord};

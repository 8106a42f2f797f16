//! Browser bindings: explore one partitioning decision, run a scenario and
//! compare the cache modes. Every export takes and returns JSON text so the
//! page needs no generated glue beyond `wasm-bindgen`.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use spc_offload::aco::brute_force_partition_capped;
use spc_offload::context::DeviceKind;
use spc_offload::experiment::compare_cache_modes;
use spc_offload::{aco_partition, benchmark, expand, AcoParams, Benchmark, DeviceProfile, Link, ScenarioConfig, SpcTopology};

/// Calibration scenario shipped with the page.
pub const CALIBRATION_SCENARIO: &str = include_str!("../../../scenarios/paper_6_2.scenario");
/// Two-phase cache scenario shipped with the page.
pub const CACHE_SCENARIO: &str = include_str!("../../../scenarios/cache_gain.scenario");

/// Largest search space the explorer enumerates for the exact optimum.
const ORACLE_CAP: u128 = 200_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorerInput {
    pub benchmark: Benchmark,
    pub input_seed: u64,
    pub lambda: f64,
    /// Number of proximity members (D1..Dn).
    pub members: usize,
    pub member_speed: f64,
    pub source_speed: f64,
    pub source_load: f64,
    /// Bytes per millisecond between any two devices.
    pub bandwidth: f64,
    pub latency: f64,
    pub aco_seed: u64,
}

impl Default for ExplorerInput {
    fn default() -> Self {
        ExplorerInput {
            benchmark: Benchmark::Integral,
            input_seed: 0,
            lambda: 0.5,
            members: 3,
            member_speed: 22.0,
            source_speed: 8.0,
            source_load: 0.875,
            bandwidth: 5000.0,
            latency: 2.0,
            aco_seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Placement {
    pub method: String,
    pub device: String,
    pub work: u64,
    pub pinned: bool,
}

#[derive(Debug, Serialize)]
pub struct Plan {
    pub placements: Vec<Placement>,
    pub scalar: f64,
    pub time_ms: f64,
    pub source_cpu: f64,
}

#[derive(Debug, Serialize)]
pub struct ExplorerOutput {
    pub methods: usize,
    pub devices: Vec<String>,
    pub paths: String,
    pub aco: Plan,
    pub aco_operations: u64,
    /// Best scalar after each ACO iteration.
    pub aco_trace: Vec<f64>,
    /// Exact optimum when the search space is small enough.
    pub optimum: Option<Plan>,
}

fn plan(eg: &spc_offload::ExpandedGraph, g: &spc_offload::CallGraph, choice: &[usize]) -> Plan {
    let cost = eg.path_cost_indices(choice);
    let a = eg.assignment_of(choice);
    Plan {
        placements: g
            .topo_order()
            .iter()
            .map(|m| {
                let node = g.node(m).expect("method in graph");
                Placement {
                    method: m.to_string(),
                    device: a.get(m).map(|d| d.to_string()).unwrap_or_default(),
                    work: node.compute_work,
                    pinned: node.pinned,
                }
            })
            .collect(),
        scalar: cost.scalar,
        time_ms: cost.time,
        source_cpu: cost.cpu,
    }
}

/// Partitions one benchmark over a synthetic proximity cloud.
pub fn explore(input: &ExplorerInput) -> Result<ExplorerOutput, String> {
    if input.members > 8 {
        return Err("at most 8 members".into());
    }
    let g = benchmark(input.benchmark, input.input_seed);
    let mut devices = vec![DeviceProfile::new("S", input.source_speed, DeviceKind::Source).with_load(input.source_load)];
    for i in 1..=input.members {
        devices.push(DeviceProfile::new(format!("D{i}"), input.member_speed, DeviceKind::SpcMember).with_load(0.05));
    }
    let ids: Vec<String> = devices.iter().map(|d| d.id.to_string()).collect();
    let mut links = Vec::new();
    for a in &ids {
        for b in &ids {
            if a != b {
                links.push(Link::new(a.clone(), b.clone(), input.bandwidth, input.latency));
            }
        }
    }
    let topo = SpcTopology::new(devices, links).map_err(|e| e.to_string())?;
    let eg = expand(&g, &topo, input.lambda).map_err(|e| e.to_string())?;
    let aco = aco_partition(&eg, &AcoParams::with_seed(input.aco_seed)).map_err(|e| e.to_string())?;
    let optimum = brute_force_partition_capped(&eg, ORACLE_CAP).ok().map(|p| plan(&eg, &g, &p.choice));
    Ok(ExplorerOutput {
        methods: g.len(),
        devices: ids,
        paths: eg.path_count().to_string(),
        aco: plan(&eg, &g, &aco.choice),
        aco_operations: aco.stats.operations,
        aco_trace: aco.stats.best_trace,
        optimum,
    })
}

#[derive(Debug, Serialize)]
pub struct RunOutput {
    pub runs: usize,
    pub completed: usize,
    pub mean_end_to_end_ms: f64,
    pub mean_decision_ms: f64,
    pub offload_pct: f64,
    pub hit_rate_pct: f64,
    pub messages: u64,
    pub runs_csv: String,
    pub methods_csv: String,
    pub devices_csv: String,
}

fn parse_scenario(text: &str) -> Result<ScenarioConfig, String> {
    let cfg: ScenarioConfig = text.parse().map_err(|e: spc_offload::error::ConfigError| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn run(text: &str) -> Result<RunOutput, String> {
    let cfg = parse_scenario(text)?;
    if cfg.apps.iter().any(|a| a.graph.is_some()) {
        return Err("graph files cannot be loaded in the browser; use benchmarks".into());
    }
    let m = spc_offload::run_scenario(&cfg).map_err(|e| e.to_string())?;
    Ok(RunOutput {
        runs: m.runs.len(),
        completed: m.completed().count(),
        mean_end_to_end_ms: m.mean_end_to_end_ms(),
        mean_decision_ms: m.mean_decision_ms(),
        offload_pct: m.offload_pct(),
        hit_rate_pct: m.hit_rate_pct(),
        messages: m.messages.total(),
        runs_csv: m.runs_csv(),
        methods_csv: m.methods_csv(),
        devices_csv: m.devices_csv(),
    })
}

pub fn compare(text: &str) -> Result<Vec<spc_offload::experiment::ModeRow>, String> {
    let cfg = parse_scenario(text)?;
    compare_cache_modes(&cfg).map_err(|e| e.to_string())
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("output serializes"))
        .map_err(|e| JsError::new(&e))
}

/// `input` is an [`ExplorerInput`] as JSON (missing fields take defaults).
#[wasm_bindgen(js_name = explorePartition)]
pub fn explore_partition(input: &str) -> Result<String, JsError> {
    let parsed: ExplorerInput = serde_json::from_str(input).map_err(|e| JsError::new(&e.to_string()))?;
    json(explore(&parsed))
}

#[wasm_bindgen(js_name = runScenario)]
pub fn run_scenario_json(scenario: &str) -> Result<String, JsError> {
    json(run(scenario))
}

#[wasm_bindgen(js_name = compareCacheModes)]
pub fn compare_cache_modes_json(scenario: &str) -> Result<String, JsError> {
    json(compare(scenario))
}

#[wasm_bindgen(js_name = calibrationScenario)]
pub fn calibration_scenario() -> String {
    CALIBRATION_SCENARIO.to_string()
}

#[wasm_bindgen(js_name = cacheScenario)]
pub fn cache_scenario() -> String {
    CACHE_SCENARIO.to_string()
}

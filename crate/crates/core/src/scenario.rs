//! Scenario files: the JSON document that fully describes one simulation.
//!
//! Every field except `schema`, `seed`, `devices` and `apps` has a default,
//! so small scenarios stay small. Relative graph paths resolve against the
//! directory of the scenario file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aco::AcoParams;
use crate::cache::{CachePolicies, DEFAULT_CAPACITY, DEFAULT_THETA};
use crate::context::{Bucketing, DeviceId, DeviceKind, DeviceProfile, Link};
use crate::error::ConfigError;
use crate::expand::{DEFAULT_LAMBDA, DEFAULT_MARSHAL_PER_BYTE};
use crate::graph::{benchmark, Benchmark, CallGraph};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon_ms: f64,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub links: LinkSpec,
    #[serde(default)]
    pub bucketing: Bucketing,
    pub apps: Vec<AppSpec>,
    #[serde(default)]
    pub decision: DecisionSpec,
    #[serde(default)]
    pub cache: CacheSpec,
    #[serde(default)]
    pub overhead: OverheadModel,
    #[serde(default)]
    pub load: LoadModel,
    #[serde(default)]
    pub discovery: Discovery,
    #[serde(default)]
    pub churn: ChurnSpec,
    #[serde(default)]
    pub outputs: Outputs,
    /// Directory relative graph paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_horizon() -> f64 {
    3_600_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: DeviceId,
    pub speed: f64,
    #[serde(default)]
    pub load: f64,
    #[serde(default = "one")]
    pub battery: f64,
    #[serde(default = "default_memory")]
    pub memory: u64,
    pub kind: DeviceKind,
    /// Absent devices only appear through a churn `join`.
    #[serde(default = "yes")]
    pub present: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_memory() -> u64 {
    1 << 30
}

impl DeviceSpec {
    pub fn profile(&self) -> DeviceProfile {
        DeviceProfile {
            id: self.id.clone(),
            speed: self.speed,
            load: self.load,
            battery: self.battery,
            memory: self.memory,
            kind: self.kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Bytes per ms.
    pub bandwidth: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSpec {
    /// Between two proximity devices.
    pub spc: LinkParams,
    /// Between any device and a remote cloud.
    pub cloud: LinkParams,
    pub overrides: Vec<Link>,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec {
            spc: LinkParams {
                bandwidth: 5000.0,
                latency: 2.0,
            },
            cloud: LinkParams {
                bandwidth: 2000.0,
                latency: 15.0,
            },
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Populates caches with ACO decisions; not part of the comparison.
    Warmup,
    Measure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Benchmark>,
    /// JSON call-graph file, as an alternative to a benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    /// Name used in outputs and cache keys; defaults to the benchmark name
    /// or the graph file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_inputs")]
    pub input_seeds: Vec<u64>,
    #[serde(default = "default_reps")]
    pub repetitions: u32,
    /// Device that launches the app; defaults to the source device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceId>,
    #[serde(default = "default_start")]
    pub start_ms: f64,
    #[serde(default = "default_gap")]
    pub gap_ms: f64,
    #[serde(default = "default_phase")]
    pub phase: Phase,
}

fn default_inputs() -> Vec<u64> {
    vec![0]
}

fn default_reps() -> u32 {
    1
}

fn default_start() -> f64 {
    1000.0
}

fn default_gap() -> f64 {
    500.0
}

fn default_phase() -> Phase {
    Phase::Measure
}

impl AppSpec {
    pub fn benchmark(b: Benchmark) -> Self {
        AppSpec {
            benchmark: Some(b),
            graph: None,
            name: None,
            input_seeds: default_inputs(),
            repetitions: default_reps(),
            device: None,
            start_ms: default_start(),
            gap_ms: default_gap(),
            phase: default_phase(),
        }
    }

    pub fn app_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (&self.benchmark, &self.graph) {
            (Some(b), _) => b.name().to_string(),
            (None, Some(g)) => Path::new(g)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| g.clone()),
            (None, None) => String::new(),
        }
    }

    /// The graph for one input; benchmark jitter mixes the scenario seed in
    /// so that different scenario seeds see different inputs.
    pub fn build_graph(&self, base: Option<&Path>, scenario_seed: u64, input_seed: u64) -> Result<CallGraph, ConfigError> {
        match (&self.benchmark, &self.graph) {
            (Some(b), None) => Ok(benchmark(*b, mix(scenario_seed, input_seed))),
            (None, Some(g)) => {
                let path = resolve(base, g);
                CallGraph::load(&path).map_err(|e| ConfigError::invalid("apps.graph", format!("{}: {e}", path.display())))
            }
            _ => Err(ConfigError::invalid("apps", "exactly one of `benchmark` and `graph` is required")),
        }
    }
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let path = Path::new(p);
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

/// SplitMix64 finalizer over two words; used to derive independent seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Per-call ACO re-decision before every method.
    Aco,
    /// Own cache first, ACO on a miss.
    CacheLocal,
    /// Own cache merged with neighbours' caches, ACO on a miss.
    CacheCollab,
}

impl DecisionMode {
    pub const ALL: [DecisionMode; 3] = [DecisionMode::Aco, DecisionMode::CacheLocal, DecisionMode::CacheCollab];

    pub fn name(self) -> &'static str {
        match self {
            DecisionMode::Aco => "aco",
            DecisionMode::CacheLocal => "cache_local",
            DecisionMode::CacheCollab => "cache_collab",
        }
    }
}

impl fmt::Display for DecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which devices besides the launching one may receive methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    All,
    /// Proximity devices only.
    Spc,
    /// Remote clouds only.
    Remote,
    /// Nothing leaves the launching device.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionSpec {
    pub mode: DecisionMode,
    pub lambda: f64,
    pub marshal_per_byte: f64,
    pub targets: Targets,
    pub aco: AcoParams,
}

impl Default for DecisionSpec {
    fn default() -> Self {
        DecisionSpec {
            mode: DecisionMode::Aco,
            lambda: DEFAULT_LAMBDA,
            marshal_per_byte: DEFAULT_MARSHAL_PER_BYTE,
            targets: Targets::All,
            aco: AcoParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSpec {
    /// Rows in each device's own cache.
    pub capacity: usize,
    /// Rows in the merged view built for a collaborative lookup.
    pub collab_capacity: usize,
    pub theta: f64,
    pub policies: CachePolicies,
}

impl Default for CacheSpec {
    fn default() -> Self {
        CacheSpec {
            capacity: DEFAULT_CAPACITY,
            collab_capacity: 4 * DEFAULT_CAPACITY,
            theta: DEFAULT_THETA,
            policies: CachePolicies::default(),
        }
    }
}

/// Simulated time charged for decision making. ACO is charged per operation
/// counted by the search, a cache lookup per edit-distance cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverheadModel {
    pub aco_fixed_ms: f64,
    pub aco_ms_per_kop: f64,
    pub lookup_fixed_ms: f64,
    pub match_ms_per_kcell: f64,
    /// Following one step of a cached plan.
    pub plan_step_ms: f64,
}

impl Default for OverheadModel {
    fn default() -> Self {
        OverheadModel {
            aco_fixed_ms: 0.5,
            aco_ms_per_kop: 0.01,
            lookup_fixed_ms: 0.05,
            match_ms_per_kcell: 0.01,
            plan_step_ms: 0.0,
        }
    }
}

impl OverheadModel {
    pub fn aco_ms(&self, operations: u64) -> f64 {
        if operations == 0 {
            0.0
        } else {
            self.aco_fixed_ms + self.aco_ms_per_kop * operations as f64 / 1000.0
        }
    }

    pub fn lookup_ms(&self, cells: u64) -> f64 {
        self.lookup_fixed_ms + self.match_ms_per_kcell * cells as f64 / 1000.0
    }
}

/// Devices that serve offloaded work stay busier for a while: each served
/// run adds `bump` to the device's load, decaying with time constant
/// `decay_ms`. `noise` perturbs every device's base load per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadModel {
    pub bump: f64,
    pub decay_ms: f64,
    pub noise: f64,
    pub max_load: f64,
}

impl Default for LoadModel {
    fn default() -> Self {
        LoadModel {
            bump: 0.0,
            decay_ms: 2000.0,
            noise: 0.0,
            max_load: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discovery {
    pub beacon_period_ms: f64,
    pub ttl_ms: f64,
    /// Time to notice that a chosen device is gone.
    pub failure_timeout_ms: f64,
    /// Payload size of one shared trail.
    pub trail_bytes: u64,
}

impl Default for Discovery {
    fn default() -> Self {
        Discovery {
            beacon_period_ms: 100.0,
            ttl_ms: 250.0,
            failure_timeout_ms: 50.0,
            trail_bytes: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChurnAction {
    Join,
    Leave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChurnEvent {
    pub at_ms: f64,
    pub device: DeviceId,
    pub action: ChurnAction,
}

/// Alternating up/down periods with exponential durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChurnProcess {
    /// Devices subject to churn; empty means every proximity member.
    #[serde(default)]
    pub devices: Vec<DeviceId>,
    pub mean_up_ms: f64,
    pub mean_down_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChurnSpec {
    pub events: Vec<ChurnEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<ChurnProcess>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub runs_csv: String,
    pub methods_csv: String,
    pub devices_csv: String,
    pub summary_csv: String,
    pub log: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            runs_csv: "runs.csv".into(),
            methods_csv: "methods.csv".into(),
            devices_csv: "devices.csv".into(),
            summary_csv: "summary.csv".into(),
            log: "run_log.jsonl".into(),
        }
    }
}

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })
    }
}

impl ScenarioConfig {
    /// Reads, parses and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::load_unvalidated(path)?;
        cfg.validate()?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn load_unvalidated(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: ScenarioConfig = text.parse()?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn device(&self, id: &DeviceId) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| &d.id == id)
    }

    pub fn source(&self) -> &DeviceSpec {
        self.devices
            .iter()
            .find(|d| d.kind == DeviceKind::Source)
            .expect("validated scenarios have a source")
    }

    /// Link parameters between two distinct devices.
    pub fn link(&self, from: &DeviceId, to: &DeviceId) -> Link {
        if let Some(l) = self.links.overrides.iter().find(|l| &l.from == from && &l.to == to) {
            return l.clone();
        }
        let cloud = [from, to]
            .iter()
            .any(|d| self.device(d).is_some_and(|s| s.kind == DeviceKind::RemoteCloud));
        let p = if cloud { self.links.cloud } else { self.links.spc };
        Link {
            from: from.clone(),
            to: to.clone(),
            bandwidth: p.bandwidth,
            latency: p.latency,
        }
    }

    /// Distinct app names in first-appearance order.
    pub fn app_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.apps
            .iter()
            .map(AppSpec::app_name)
            .filter(|n| seen.insert(n.clone()))
            .collect()
    }

    /// Applies `key=value` overrides. Keys are dotted paths into the JSON
    /// document (array elements by index); values are parsed as JSON and
    /// fall back to a plain string.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("scenario serializes");
        for (key, raw) in overrides {
            let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            set_path(&mut doc, key, value)?;
        }
        let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            ConfigError::invalid(e.path().to_string(), e.into_inner().to_string())
        })?;
        cfg.base_dir = self.base_dir.clone();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |f: &str, m: String| Err(ConfigError::invalid(f, m));
        if self.schema != SCHEMA_VERSION {
            return bad("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema));
        }
        if !(self.horizon_ms > 0.0) {
            return bad("horizon_ms", "must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for (i, d) in self.devices.iter().enumerate() {
            let f = format!("devices[{i}]");
            if !ids.insert(&d.id) {
                return bad(&f, format!("duplicate device id `{}`", d.id));
            }
            if d.id.as_str().is_empty() || d.id.as_str().contains([',', ';', '=', '"']) {
                return bad(&f, "device ids must be non-empty and free of `,;=\"`".into());
            }
            if let Err(e) = d.profile().validate() {
                return bad(&f, e.to_string());
            }
        }
        let sources: Vec<_> = self.devices.iter().filter(|d| d.kind == DeviceKind::Source).collect();
        if sources.len() != 1 {
            return bad("devices", format!("exactly one device must have kind `source`, found {}", sources.len()));
        }
        for (name, p) in [("links.spc", self.links.spc), ("links.cloud", self.links.cloud)] {
            if !(p.bandwidth > 0.0) || !(p.latency >= 0.0) {
                return bad(name, "bandwidth must be positive and latency non-negative".into());
            }
        }
        for (i, l) in self.links.overrides.iter().enumerate() {
            if !ids.contains(&l.from) || !ids.contains(&l.to) || l.from == l.to {
                return bad(&format!("links.overrides[{i}]"), "must join two distinct known devices".into());
            }
            if !(l.bandwidth > 0.0) || !(l.latency >= 0.0) {
                return bad(&format!("links.overrides[{i}]"), "bandwidth must be positive and latency non-negative".into());
            }
        }
        if let Err(e) = self.bucketing.validate() {
            return bad("bucketing", e);
        }
        if self.apps.is_empty() {
            return bad("apps", "at least one app is required".into());
        }
        for (i, a) in self.apps.iter().enumerate() {
            let f = format!("apps[{i}]");
            match (&a.benchmark, &a.graph) {
                (Some(_), None) => {}
                (None, Some(g)) => {
                    let path = resolve(self.base_dir.as_deref(), g);
                    if let Err(e) = CallGraph::load(&path) {
                        return bad(&format!("{f}.graph"), format!("{}: {e}", path.display()));
                    }
                }
                _ => return bad(&f, "exactly one of `benchmark` and `graph` is required".into()),
            }
            if a.app_name().is_empty() {
                return bad(&format!("{f}.name"), "must not be empty".into());
            }
            if a.input_seeds.is_empty() || a.repetitions == 0 {
                return bad(&f, "needs at least one input seed and one repetition".into());
            }
            if let Some(d) = &a.device {
                match self.device(d) {
                    None => return bad(&format!("{f}.device"), format!("unknown device `{d}`")),
                    Some(s) if s.kind == DeviceKind::RemoteCloud => {
                        return bad(&format!("{f}.device"), "apps cannot be launched on a remote cloud".into())
                    }
                    _ => {}
                }
            }
            if !(a.start_ms >= 0.0) || !(a.gap_ms >= 0.0) {
                return bad(&f, "start_ms and gap_ms must be non-negative".into());
            }
        }
        if !(0.0..=1.0).contains(&self.decision.lambda) {
            return bad("decision.lambda", "must lie in [0, 1]".into());
        }
        if !(self.decision.marshal_per_byte >= 0.0) {
            return bad("decision.marshal_per_byte", "must be non-negative".into());
        }
        if let Err(e) = self.decision.aco.validate() {
            return bad("decision.aco", e.to_string());
        }
        if self.cache.capacity == 0 || self.cache.collab_capacity == 0 {
            return bad("cache", "capacities must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.cache.theta) {
            return bad("cache.theta", "must lie in [0, 1]".into());
        }
        if let Err(e) = self.cache.policies.validate() {
            return bad("cache.policies", e);
        }
        let o = &self.overhead;
        if [o.aco_fixed_ms, o.aco_ms_per_kop, o.lookup_fixed_ms, o.match_ms_per_kcell, o.plan_step_ms]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("overhead", "all overhead constants must be non-negative".into());
        }
        let l = &self.load;
        if !(l.bump >= 0.0) || !(l.decay_ms > 0.0) || !(l.noise >= 0.0) || !(0.0..1.0).contains(&l.max_load) {
            return bad("load", "bump, noise >= 0; decay_ms > 0; max_load in [0, 1)".into());
        }
        let d = &self.discovery;
        if !(d.beacon_period_ms > 0.0) || !(d.ttl_ms > 0.0) || !(d.failure_timeout_ms >= 0.0) {
            return bad("discovery", "beacon_period_ms and ttl_ms must be positive".into());
        }
        for (i, e) in self.churn.events.iter().enumerate() {
            if !ids.contains(&e.device) || !(e.at_ms >= 0.0) {
                return bad(&format!("churn.events[{i}]"), "unknown device or negative time".into());
            }
        }
        if let Some(p) = &self.churn.process {
            if !(p.mean_up_ms > 0.0) || !(p.mean_down_ms > 0.0) {
                return bad("churn.process", "mean durations must be positive".into());
            }
            if let Some(d) = p.devices.iter().find(|d| !ids.contains(d)) {
                return bad("churn.process.devices", format!("unknown device `{d}`"));
            }
        }
        Ok(())
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| ConfigError::invalid(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::invalid(key, format!("index {idx} out of range ({len} items)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(ConfigError::invalid(key, format!("`{part}` is not inside an object or array"))),
        };
    }
    Ok(())
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(ConfigError::invalid(s, "overrides take the form key=value")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "seed": 3,
        "devices": [
            {"id": "S", "speed": 1.0, "kind": "source"},
            {"id": "D1", "speed": 4.0, "kind": "spc_member"}
        ],
        "apps": [{"benchmark": "integral"}]
    }"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c: ScenarioConfig = MINIMAL.parse().unwrap();
        c.validate().unwrap();
        assert_eq!(c.cache.capacity, 10);
        assert_eq!(c.decision.mode, DecisionMode::Aco);
        assert_eq!(c.apps[0].app_name(), "integral");
    }

    #[test]
    fn roundtrip_is_identity() {
        let c: ScenarioConfig = MINIMAL.parse().unwrap();
        let again: ScenarioConfig = c.to_json().parse().unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let text = MINIMAL.replace("\"speed\": 4.0", "\"speed\": \"fast\"");
        match text.parse::<ScenarioConfig>() {
            Err(ConfigError::Parse { field, line, .. }) => {
                assert_eq!(field, "devices[1].speed");
                assert_eq!(line, 6);
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("\"seed\": 3,", "\"seed\": 3, \"sede\": 1,");
        assert!(text.parse::<ScenarioConfig>().is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let c: ScenarioConfig = MINIMAL.parse().unwrap();
        let bad = c.with_overrides(&[("decision.lambda".into(), "1.5".into())]).unwrap();
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid { field, .. }) if field == "decision.lambda"));
        let bad = c.with_overrides(&[("devices.1.kind".into(), "source".into())]).unwrap();
        assert!(bad.validate().is_err());
        let bad = c.with_overrides(&[("apps.0.device".into(), "nobody".into())]).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c: ScenarioConfig = MINIMAL.parse().unwrap();
        let o = c
            .with_overrides(&[
                ("seed".into(), "9".into()),
                ("cache.policies.merge".into(), "unique".into()),
                ("apps.0.benchmark".into(), "facerec".into()),
                ("decision.aco.n_ants".into(), "4".into()),
            ])
            .unwrap();
        assert_eq!(o.seed, 9);
        assert_eq!(o.cache.policies.merge, crate::cache::MergePolicy::Unique);
        assert_eq!(o.apps[0].benchmark, Some(Benchmark::Facerec));
        assert_eq!(o.decision.aco.n_ants, 4);
        assert!(c.with_overrides(&[("apps.7.benchmark".into(), "x".into())]).is_err());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn links_default_by_device_kind() {
        let mut c: ScenarioConfig = MINIMAL.parse().unwrap();
        c.devices.push(DeviceSpec {
            id: "C".into(),
            speed: 40.0,
            load: 0.0,
            battery: 1.0,
            memory: 1,
            kind: DeviceKind::RemoteCloud,
            present: true,
        });
        let s = DeviceId::new("S");
        assert_eq!(c.link(&s, &"C".into()).latency, c.links.cloud.latency);
        assert_eq!(c.link(&s, &"D1".into()).latency, c.links.spc.latency);
    }

    #[test]
    fn mix_spreads_seeds() {
        assert_ne!(mix(1, 0), mix(0, 1));
        assert_eq!(mix(5, 6), mix(5, 6));
    }
}

//! Experiments built from repeated scenario runs: parameter sweeps and the
//! aco / local-cache / collaborative-cache comparison.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{ConfigError, SimError};
use crate::scenario::{DecisionMode, Phase, ScenarioConfig};
use crate::sim::metrics::{self, r6};
use crate::sim::{run_scenario, CacheOutcome, MetricsRecord, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Merge,
    Dissemination,
    Invalidation,
    Theta,
    Capacity,
}

impl FromStr for SweepParam {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "lambda" => SweepParam::Lambda,
            "merge" => SweepParam::Merge,
            "dissemination" => SweepParam::Dissemination,
            "invalidation" => SweepParam::Invalidation,
            "theta" => SweepParam::Theta,
            "capacity" => SweepParam::Capacity,
            other => return Err(ConfigError::UnknownParameter(other.to_string())),
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Merge => "merge",
            SweepParam::Dissemination => "dissemination",
            SweepParam::Invalidation => "invalidation",
            SweepParam::Theta => "theta",
            SweepParam::Capacity => "capacity",
        })
    }
}

/// Splits `name:arg` policy values.
fn policy(value: &str, field: &str, arg_name: &str) -> Result<String, ConfigError> {
    let (kind, arg) = match value.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (value, None),
    };
    match arg {
        None => Ok(format!(r#"{{"kind":"{kind}"}}"#)),
        Some(a) => {
            let x: f64 = a
                .parse()
                .map_err(|_| ConfigError::invalid(field, format!("`{a}` is not a number")))?;
            Ok(format!(r#"{{"kind":"{kind}","{arg_name}":{x}}}"#))
        }
    }
}

/// The `--set` overrides that put `value` into `param`.
///
/// Policy values take an optional numeric argument: `periodic:500`,
/// `on_change:0.3`.
pub fn sweep_override(param: SweepParam, value: &str) -> Result<(String, String), ConfigError> {
    Ok(match param {
        SweepParam::Lambda => ("decision.lambda".into(), value.into()),
        SweepParam::Merge => ("cache.policies.merge".into(), value.into()),
        SweepParam::Theta => ("cache.theta".into(), value.into()),
        SweepParam::Capacity => ("cache.capacity".into(), value.into()),
        SweepParam::Dissemination => (
            "cache.policies.dissemination".into(),
            policy(value, "cache.policies.dissemination", "interval_ms")?,
        ),
        SweepParam::Invalidation => {
            let arg = if value.starts_with("periodic") { "ttl_ms" } else { "drift" };
            ("cache.policies.invalidation".into(), policy(value, "cache.policies.invalidation", arg)?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub runs: usize,
    pub mean_end_to_end_ms: f64,
    pub mean_decision_ms: f64,
    pub hit_rate_pct: f64,
    pub offload_pct: f64,
    pub messages: u64,
    /// Realized placement of the last completed run.
    pub last_assignment: String,
}

fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// One scenario run per value, all with the scenario's seed. Rows follow
/// the order of `values`.
pub fn sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepRow>, SimError> {
    let configs = values
        .iter()
        .map(|v| {
            let c = cfg.with_overrides(&[sweep_override(param, v)?])?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let results = map_ordered(&configs, run_scenario);
    values
        .iter()
        .zip(results)
        .map(|(v, m)| {
            let m = m?;
            Ok(SweepRow {
                parameter: param.to_string(),
                value: v.clone(),
                runs: m.completed().count(),
                mean_end_to_end_ms: r6(m.mean_end_to_end_ms()),
                mean_decision_ms: r6(m.mean_decision_ms()),
                hit_rate_pct: r6(m.hit_rate_pct()),
                offload_pct: r6(m.offload_pct()),
                messages: m.messages.total(),
                last_assignment: m.completed().last().map(RunRecord::assignment).unwrap_or_default(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRow {
    pub app: String,
    pub mode: String,
    /// Completed measure-phase runs.
    pub runs: usize,
    pub mean_decision_ms: f64,
    pub mean_end_to_end_ms: f64,
    pub hit_rate_pct: f64,
    /// `100 · (1 - decision / local-cache decision)`.
    pub decision_gain_vs_local_pct: f64,
}

/// Measure-phase aggregates of one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSummary {
    pub runs: usize,
    pub mean_decision_ms: f64,
    pub mean_end_to_end_ms: f64,
    pub hit_rate_pct: f64,
}

pub fn measure_summary(m: &MetricsRecord) -> PhaseSummary {
    let runs: Vec<&RunRecord> = m.completed().filter(|r| r.phase == Phase::Measure).collect();
    let n = runs.len().max(1) as f64;
    let lookups = runs
        .iter()
        .filter(|r| matches!(r.cache, CacheOutcome::Hit | CacheOutcome::Miss))
        .count();
    let hits = runs.iter().filter(|r| r.cache == CacheOutcome::Hit).count();
    PhaseSummary {
        runs: runs.len(),
        mean_decision_ms: runs.iter().map(|r| r.decision_ms).sum::<f64>() / n,
        mean_end_to_end_ms: runs.iter().map(|r| r.end_to_end_ms).sum::<f64>() / n,
        hit_rate_pct: if lookups == 0 { 0.0 } else { 100.0 * hits as f64 / lookups as f64 },
    }
}

/// Runs every app of the scenario on its own under each decision mode and
/// reports measure-phase decision overhead and end-to-end time.
///
/// The scenario must contain warm-up apps (which populate caches) and
/// measure apps.
pub fn compare_cache_modes(cfg: &ScenarioConfig) -> Result<Vec<ModeRow>, SimError> {
    cfg.validate()?;
    for phase in [Phase::Warmup, Phase::Measure] {
        if !cfg.apps.iter().any(|a| a.phase == phase) {
            let name = if phase == Phase::Warmup { "warmup" } else { "measure" };
            return Err(ConfigError::invalid("apps", format!("comparison needs at least one `{name}` app")).into());
        }
    }
    let mut jobs = Vec::new();
    for app in cfg.app_names() {
        for mode in DecisionMode::ALL {
            let mut c = cfg.clone();
            c.apps.retain(|a| a.app_name() == app);
            c.decision.mode = mode;
            jobs.push((app.clone(), mode, c));
        }
    }
    let results = map_ordered(&jobs, |(_, _, c)| run_scenario(c).map(|m| measure_summary(&m)));
    let mut rows = Vec::new();
    for (chunk, res) in jobs.chunks(3).zip(results.chunks(3)) {
        let summaries = res.iter().cloned().collect::<Result<Vec<_>, _>>()?;
        let local = summaries[1].mean_decision_ms;
        for ((app, mode, _), s) in chunk.iter().zip(&summaries) {
            let gain = if local > 0.0 { 100.0 * (1.0 - s.mean_decision_ms / local) } else { 0.0 };
            rows.push(ModeRow {
                app: app.clone(),
                mode: mode.to_string(),
                runs: s.runs,
                mean_decision_ms: r6(s.mean_decision_ms),
                mean_end_to_end_ms: r6(s.mean_end_to_end_ms),
                hit_rate_pct: r6(s.hit_rate_pct),
                decision_gain_vs_local_pct: r6(gain),
            });
        }
    }
    Ok(rows)
}

/// Collaborative-cache decision gain per app, in percent.
pub fn collab_gains(rows: &[ModeRow]) -> Vec<(String, f64)> {
    rows.iter()
        .filter(|r| r.mode == DecisionMode::CacheCollab.name())
        .map(|r| (r.app.clone(), r.decision_gain_vs_local_pct))
        .collect()
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> String {
    metrics::to_csv(rows)
}

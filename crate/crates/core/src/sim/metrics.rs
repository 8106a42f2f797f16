//! Per-run records and the aggregate tables written as CSV.
//!
//! CSV columns are a fixed contract; wall-clock measurements never appear in
//! any file so that equal seeds give byte-identical outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::context::DeviceId;
use crate::error::SimError;
use crate::graph::MethodId;
use crate::scenario::{Outputs, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheOutcome {
    /// No cache involved (per-call ACO, or nothing to offload to).
    None,
    Hit,
    Miss,
    /// Warm-up decision: ACO, then recorded.
    Recorded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub method: MethodId,
    pub device: DeviceId,
    pub offloaded: bool,
    pub failed: bool,
    pub decision_ms: f64,
    pub compute_ms: f64,
    pub transfer_ms: f64,
    pub wasted_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub index: usize,
    pub app: String,
    pub phase: Phase,
    pub device: DeviceId,
    pub input_seed: u64,
    pub repetition: u32,
    pub start_ms: f64,
    pub end_ms: f64,
    pub end_to_end_ms: f64,
    pub compute_ms: f64,
    pub transfer_ms: f64,
    pub decision_ms: f64,
    pub wasted_ms: f64,
    pub cache: CacheOutcome,
    pub aborted: bool,
    pub steps: Vec<StepRecord>,
    /// Wall-clock spent inside the decision engine; reported, never written.
    #[serde(skip)]
    pub decision_wall_ns: u128,
}

impl RunRecord {
    pub fn offloaded(&self) -> usize {
        self.steps.iter().filter(|s| s.offloaded).count()
    }

    pub fn failures(&self) -> usize {
        self.steps.iter().filter(|s| s.failed).count()
    }

    pub fn assignment(&self) -> String {
        self.steps
            .iter()
            .map(|s| format!("{}={}", s.method, s.device))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Decision + compute + transfer + wasted time.
    pub fn accounted_ms(&self) -> f64 {
        self.decision_ms + self.compute_ms + self.transfer_ms + self.wasted_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodStat {
    pub app: String,
    pub method: MethodId,
    pub executions: usize,
    pub offloaded: usize,
    pub failures: usize,
    pub offload_rate_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceStat {
    /// `*` for the total over all apps.
    pub app: String,
    pub device: DeviceId,
    pub offloaded_methods: usize,
    pub contribution_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MessageCounts {
    pub beacon: u64,
    pub cache_push: u64,
    pub cache_request: u64,
    pub cache_reply: u64,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.beacon + self.cache_push + self.cache_request + self.cache_reply
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub runs: Vec<RunRecord>,
    pub messages: MessageCounts,
    pub lookups: u64,
    pub hits: u64,
    pub horizon_exceeded: bool,
    pub end_ms: f64,
}

#[derive(Debug, Serialize)]
struct RunRow<'a> {
    run: String,
    app: &'a str,
    phase: &'a str,
    device: &'a str,
    input_seed: String,
    repetition: String,
    start_ms: f64,
    end_to_end_ms: f64,
    compute_ms: f64,
    transfer_ms: f64,
    decision_ms: f64,
    wasted_ms: f64,
    methods: usize,
    offloaded: usize,
    failures: usize,
    cache: &'a str,
    aborted: bool,
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Warmup => "warmup",
        Phase::Measure => "measure",
    }
}

fn cache_name(c: CacheOutcome) -> &'static str {
    match c {
        CacheOutcome::None => "none",
        CacheOutcome::Hit => "hit",
        CacheOutcome::Miss => "miss",
        CacheOutcome::Recorded => "recorded",
    }
}

/// Rounds to 1e-6 ms so CSV cells stay readable.
pub(crate) fn r6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub(crate) fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

impl MetricsRecord {
    pub fn completed(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| !r.aborted)
    }

    pub fn hit_rate_pct(&self) -> f64 {
        if self.lookups == 0 {
            0.0
        } else {
            100.0 * self.hits as f64 / self.lookups as f64
        }
    }

    pub fn mean_end_to_end_ms(&self) -> f64 {
        mean(self.completed().map(|r| r.end_to_end_ms))
    }

    pub fn mean_decision_ms(&self) -> f64 {
        mean(self.completed().map(|r| r.decision_ms))
    }

    /// Offloaded share of all completed method executions.
    pub fn offload_pct(&self) -> f64 {
        let (off, all) = self
            .completed()
            .fold((0, 0), |(o, a), r| (o + r.offloaded(), a + r.steps.len()));
        if all == 0 {
            0.0
        } else {
            100.0 * off as f64 / all as f64
        }
    }

    /// Offload success rate per (app, method) over completed runs.
    pub fn method_stats(&self) -> Vec<MethodStat> {
        let mut order: Vec<(String, MethodId)> = Vec::new();
        let mut acc: BTreeMap<(String, MethodId), (usize, usize, usize)> = BTreeMap::new();
        for r in self.completed() {
            for s in &r.steps {
                let key = (r.app.clone(), s.method.clone());
                let e = acc.entry(key.clone()).or_insert_with(|| {
                    order.push(key);
                    (0, 0, 0)
                });
                e.0 += 1;
                e.1 += s.offloaded as usize;
                e.2 += s.failed as usize;
            }
        }
        order
            .into_iter()
            .map(|key| {
                let (n, off, fail) = acc[&key];
                MethodStat {
                    app: key.0,
                    method: key.1,
                    executions: n,
                    offloaded: off,
                    failures: fail,
                    offload_rate_pct: 100.0 * off as f64 / n as f64,
                }
            })
            .collect()
    }

    /// Share of successfully offloaded executions per device, per app and
    /// over all apps (`*`).
    pub fn device_stats(&self) -> Vec<DeviceStat> {
        let mut per: BTreeMap<(String, DeviceId), usize> = BTreeMap::new();
        for r in self.completed() {
            for s in r.steps.iter().filter(|s| s.offloaded) {
                *per.entry((r.app.clone(), s.device.clone())).or_default() += 1;
                *per.entry(("*".to_string(), s.device.clone())).or_default() += 1;
            }
        }
        let mut totals: BTreeMap<String, usize> = BTreeMap::new();
        for ((app, _), n) in &per {
            *totals.entry(app.clone()).or_default() += n;
        }
        per.into_iter()
            .map(|((app, device), n)| DeviceStat {
                contribution_pct: 100.0 * n as f64 / totals[&app] as f64,
                app,
                device,
                offloaded_methods: n,
            })
            .collect()
    }

    /// Contribution of `device` over all apps, in percent.
    pub fn contribution(&self, device: &DeviceId) -> f64 {
        self.device_stats()
            .into_iter()
            .find(|d| d.app == "*" && &d.device == device)
            .map_or(0.0, |d| d.contribution_pct)
    }

    /// Offload rate of one method, in percent.
    pub fn offload_rate(&self, app: &str, method: &str) -> Option<f64> {
        self.method_stats()
            .into_iter()
            .find(|m| m.app == app && m.method.as_str() == method)
            .map(|m| m.offload_rate_pct)
    }

    pub fn runs_csv(&self) -> String {
        let rows = self.runs.iter().map(|r| RunRow {
            run: r.index.to_string(),
            app: &r.app,
            phase: phase_name(r.phase),
            device: r.device.as_str(),
            input_seed: r.input_seed.to_string(),
            repetition: r.repetition.to_string(),
            start_ms: r6(r.start_ms),
            end_to_end_ms: r6(r.end_to_end_ms),
            compute_ms: r6(r.compute_ms),
            transfer_ms: r6(r.transfer_ms),
            decision_ms: r6(r.decision_ms),
            wasted_ms: r6(r.wasted_ms),
            methods: r.steps.len(),
            offloaded: r.offloaded(),
            failures: r.failures(),
            cache: cache_name(r.cache),
            aborted: r.aborted,
        });
        let done: Vec<&RunRecord> = self.completed().collect();
        let summary = RunRow {
            run: "summary".into(),
            app: "*",
            phase: "*",
            device: "*",
            input_seed: String::new(),
            repetition: String::new(),
            start_ms: 0.0,
            end_to_end_ms: r6(self.mean_end_to_end_ms()),
            compute_ms: r6(mean(done.iter().map(|r| r.compute_ms))),
            transfer_ms: r6(mean(done.iter().map(|r| r.transfer_ms))),
            decision_ms: r6(self.mean_decision_ms()),
            wasted_ms: r6(mean(done.iter().map(|r| r.wasted_ms))),
            methods: done.iter().map(|r| r.steps.len()).sum(),
            offloaded: done.iter().map(|r| r.offloaded()).sum(),
            failures: done.iter().map(|r| r.failures()).sum(),
            cache: "*",
            aborted: self.runs.len() != done.len(),
        };
        to_csv(rows.chain(std::iter::once(summary)))
    }

    pub fn methods_csv(&self) -> String {
        to_csv(self.method_stats().into_iter().map(|mut m| {
            m.offload_rate_pct = r6(m.offload_rate_pct);
            m
        }))
    }

    pub fn devices_csv(&self) -> String {
        to_csv(self.device_stats().into_iter().map(|mut d| {
            d.contribution_pct = r6(d.contribution_pct);
            d
        }))
    }

    /// `metric,value` pairs.
    pub fn summary_csv(&self) -> String {
        let done = self.completed().count();
        let rows: Vec<(&str, String)> = vec![
            ("runs", self.runs.len().to_string()),
            ("completed_runs", done.to_string()),
            ("mean_end_to_end_ms", r6(self.mean_end_to_end_ms()).to_string()),
            ("mean_decision_ms", r6(self.mean_decision_ms()).to_string()),
            ("offload_pct", r6(self.offload_pct()).to_string()),
            ("cache_lookups", self.lookups.to_string()),
            ("cache_hits", self.hits.to_string()),
            ("hit_rate_pct", r6(self.hit_rate_pct()).to_string()),
            ("messages_beacon", self.messages.beacon.to_string()),
            ("messages_cache_push", self.messages.cache_push.to_string()),
            ("messages_cache_request", self.messages.cache_request.to_string()),
            ("messages_cache_reply", self.messages.cache_reply.to_string()),
            ("horizon_exceeded", self.horizon_exceeded.to_string()),
            ("end_ms", r6(self.end_ms).to_string()),
        ];
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// One JSON object per run, with its realized steps.
    pub fn run_log(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            out.push_str(&serde_json::to_string(r).expect("run serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes every table into `dir` under the configured file names.
    pub fn write(&self, dir: &Path, names: &Outputs) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::Output(format!("{}: {e}", dir.display())))?;
        for (name, body) in [
            (&names.runs_csv, self.runs_csv()),
            (&names.methods_csv, self.methods_csv()),
            (&names.devices_csv, self.devices_csv()),
            (&names.summary_csv, self.summary_csv()),
            (&names.log, self.run_log()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| SimError::Output(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

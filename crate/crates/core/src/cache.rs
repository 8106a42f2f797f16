//! Decision cache: execution trails, string-matching lookup, and the
//! dissemination / merge / invalidation policies for sharing caches
//! between nearby devices.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{signature_distance, ContextSignature};
use crate::error::ContextError;
use crate::expand::Assignment;

pub const DEFAULT_CAPACITY: usize = 10;
pub const DEFAULT_THETA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservedCost {
    pub time_ms: f64,
    pub cpu: f64,
}

/// One past decision and what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrail {
    pub app: String,
    pub signature: ContextSignature,
    pub assignment: Assignment,
    pub observed_cost: ObservedCost,
    pub weight: u32,
    pub created_at: f64,
}

impl ExecutionTrail {
    pub fn new(app: impl Into<String>, signature: ContextSignature, assignment: Assignment) -> Self {
        ExecutionTrail {
            app: app.into(),
            signature,
            assignment,
            observed_cost: ObservedCost::default(),
            weight: 1,
            created_at: 0.0,
        }
    }

    /// Rows are the same decision when app, signature and assignment agree;
    /// observed cost and weight do not matter.
    pub fn same_decision(&self, other: &ExecutionTrail) -> bool {
        self.app == other.app && self.signature == other.signature && self.assignment == other.assignment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Always add at the end.
    Append,
    /// Drop rows that repeat an existing decision.
    Unique,
    /// Repeated decisions add their weight to the existing row.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dissemination {
    /// Broadcast a cache request when a lookup misses.
    OnDemand,
    /// Push own trails to neighbours every `interval_ms`.
    Periodic { interval_ms: f64 },
    /// Push own trails after every change to the local cache.
    OnChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Invalidation {
    /// Drop trails older than `ttl_ms`.
    Periodic { ttl_ms: f64 },
    /// Reset the cache when the context drifted more than `drift` from the
    /// last checkpoint.
    OnChange { drift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachePolicies {
    pub dissemination: Dissemination,
    pub merge: MergePolicy,
    pub invalidation: Invalidation,
}

impl Default for CachePolicies {
    fn default() -> Self {
        CachePolicies {
            dissemination: Dissemination::OnChange,
            merge: MergePolicy::Weighted,
            invalidation: Invalidation::Periodic { ttl_ms: 600_000.0 },
        }
    }
}

impl CachePolicies {
    pub fn validate(&self) -> Result<(), String> {
        if let Dissemination::Periodic { interval_ms } = self.dissemination {
            if !(interval_ms > 0.0) {
                return Err("dissemination interval_ms must be positive".into());
            }
        }
        match self.invalidation {
            Invalidation::Periodic { ttl_ms } if !(ttl_ms > 0.0) => Err("invalidation ttl_ms must be positive".into()),
            Invalidation::OnChange { drift } if !(0.0..=1.0).contains(&drift) => {
                Err("invalidation drift must lie in [0, 1]".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCache {
    trails: Vec<ExecutionTrail>,
    capacity: usize,
    #[serde(default)]
    checkpoint: Option<ContextSignature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupHit {
    pub index: usize,
    pub distance: f64,
    pub trail: ExecutionTrail,
}

/// Result of a scan; `cells` counts edit-distance table cells computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub hit: Option<LookupHit>,
    pub cells: u64,
}

impl DecisionCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        DecisionCache {
            trails: Vec::new(),
            capacity,
            checkpoint: None,
        }
    }

    pub fn trails(&self) -> &[ExecutionTrail] {
        &self.trails
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.trails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trails.is_empty()
    }

    pub fn clear(&mut self) {
        self.trails.clear();
    }

    /// Signature at the last on-change invalidation checkpoint.
    pub fn checkpoint(&self) -> Option<&ContextSignature> {
        self.checkpoint.as_ref()
    }

    /// Adds a trail under `merge`, evicting the oldest rows past capacity.
    /// Returns whether the cache changed.
    pub fn record_trail(&mut self, t: ExecutionTrail, merge: MergePolicy) -> bool {
        let existing = self.trails.iter().position(|r| r.same_decision(&t));
        match (merge, existing) {
            (MergePolicy::Unique, Some(_)) => return false,
            (MergePolicy::Weighted, Some(i)) => {
                let row = &mut self.trails[i];
                row.weight = row.weight.saturating_add(t.weight);
                row.observed_cost = t.observed_cost;
                row.created_at = row.created_at.max(t.created_at);
                return true;
            }
            _ => self.trails.push(t),
        }
        while self.trails.len() > self.capacity {
            self.trails.remove(0);
        }
        true
    }

    /// Folds `record_trail` over `incoming` in order.
    pub fn merge_caches<'a>(&mut self, incoming: impl IntoIterator<Item = &'a ExecutionTrail>, merge: MergePolicy) -> bool {
        let mut changed = false;
        for t in incoming {
            changed |= self.record_trail(t.clone(), merge);
        }
        changed
    }

    /// Best trail for `app` within `theta` of `signature`, ranked by
    /// (distance, -weight, observed time, insertion index).
    pub fn lookup(&self, app: &str, signature: &ContextSignature, theta: f64) -> Result<Lookup, ContextError> {
        let mut best: Option<LookupHit> = None;
        let mut cells = 0u64;
        for (i, t) in self.trails.iter().enumerate().filter(|(_, t)| t.app == app) {
            let d = signature_distance(&t.signature, signature)?;
            cells += (t.signature.tokens.len() * signature.tokens.len()) as u64;
            if d > theta {
                continue;
            }
            let better = best.as_ref().is_none_or(|b| {
                d.partial_cmp(&b.distance)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| b.trail.weight.cmp(&t.weight))
                    .then_with(|| {
                        t.observed_cost
                            .time_ms
                            .partial_cmp(&b.trail.observed_cost.time_ms)
                            .unwrap_or(Ordering::Equal)
                    })
                    == Ordering::Less
            });
            if better {
                best = Some(LookupHit {
                    index: i,
                    distance: d,
                    trail: t.clone(),
                });
            }
        }
        Ok(Lookup { hit: best, cells })
    }

    /// Applies an invalidation policy at time `now`. Returns whether any
    /// trail was dropped.
    pub fn invalidate(&mut self, policy: Invalidation, now: f64, current: &ContextSignature) -> Result<bool, ContextError> {
        match policy {
            Invalidation::Periodic { ttl_ms } => {
                let before = self.trails.len();
                self.trails.retain(|t| now - t.created_at <= ttl_ms);
                Ok(self.trails.len() != before)
            }
            Invalidation::OnChange { drift } => {
                let Some(cp) = &self.checkpoint else {
                    self.checkpoint = Some(current.clone());
                    return Ok(false);
                };
                if signature_distance(cp, current)? > drift {
                    let changed = !self.trails.is_empty();
                    self.trails.clear();
                    self.checkpoint = Some(current.clone());
                    Ok(changed)
                } else {
                    Ok(false)
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cache serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let c: DecisionCache = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if c.capacity == 0 || c.trails.len() > c.capacity {
            return Err(format!("{} trails exceed capacity {}", c.trails.len(), c.capacity));
        }
        if c.trails.iter().any(|t| t.weight == 0) {
            return Err("trail weights must be at least 1".into());
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        Self::from_json(&text)
    }
}

/// What happened to a cache, as seen by the dissemination policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CacheEvent {
    /// A record or invalidation changed the local cache.
    Changed { at: f64 },
    LookupMiss { at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SendEvent {
    /// Push own trails to every visible neighbour.
    Broadcast { at: f64 },
    /// Ask every visible neighbour for its trails.
    Request { at: f64 },
}

impl SendEvent {
    pub fn at(&self) -> f64 {
        match self {
            SendEvent::Broadcast { at } | SendEvent::Request { at } => *at,
        }
    }
}

impl Dissemination {
    /// Immediate reaction to a cache event.
    pub fn react(&self, ev: CacheEvent) -> Option<SendEvent> {
        match (self, ev) {
            (Dissemination::OnChange, CacheEvent::Changed { at }) => Some(SendEvent::Broadcast { at }),
            (Dissemination::OnDemand, CacheEvent::LookupMiss { at }) => Some(SendEvent::Request { at }),
            _ => None,
        }
    }

    /// Periodic broadcast instants in `(from, to]`.
    pub fn ticks(&self, from: f64, to: f64) -> Vec<f64> {
        match self {
            Dissemination::Periodic { interval_ms } => {
                let mut out = Vec::new();
                let mut k = 1.0;
                while from + k * interval_ms <= to {
                    out.push(from + k * interval_ms);
                    k += 1.0;
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

/// Sends a device emits for `events` over the window `(from, to]`.
pub fn dissemination_events(policy: Dissemination, events: &[CacheEvent], from: f64, to: f64) -> Vec<SendEvent> {
    let mut out: Vec<SendEvent> = events.iter().filter_map(|e| policy.react(*e)).collect();
    out.extend(policy.ticks(from, to).into_iter().map(|at| SendEvent::Broadcast { at }));
    out.sort_by(|a, b| a.at().partial_cmp(&b.at()).unwrap_or(Ordering::Equal));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Bucketing;

    fn sig(tokens: &[u16]) -> ContextSignature {
        ContextSignature {
            tokens: tokens.to_vec(),
            bucketing: Bucketing::default().fingerprint(),
        }
    }

    fn trail(app: &str, tokens: &[u16], dev: &str) -> ExecutionTrail {
        let mut a = Assignment::default();
        a.insert("m".into(), dev.into());
        ExecutionTrail::new(app, sig(tokens), a)
    }

    #[test]
    fn record_into_empty() {
        let mut c = DecisionCache::new(10);
        assert!(c.record_trail(trail("a", &[1], "x"), MergePolicy::Append));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn weighted_increments() {
        let mut c = DecisionCache::new(10);
        c.record_trail(trail("a", &[1], "x"), MergePolicy::Weighted);
        c.record_trail(trail("a", &[1], "x"), MergePolicy::Weighted);
        assert_eq!(c.len(), 1);
        assert_eq!(c.trails()[0].weight, 2);
    }

    #[test]
    fn weighted_takes_newest_cost() {
        let mut c = DecisionCache::new(10);
        let mut t = trail("a", &[1], "x");
        t.observed_cost.time_ms = 10.0;
        c.record_trail(t.clone(), MergePolicy::Weighted);
        t.observed_cost.time_ms = 7.0;
        c.record_trail(t, MergePolicy::Weighted);
        assert_eq!(c.trails()[0].observed_cost.time_ms, 7.0);
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut c = DecisionCache::new(10);
        for i in 0..11u16 {
            c.record_trail(trail("a", &[i], "x"), MergePolicy::Append);
        }
        assert_eq!(c.len(), 10);
        assert_eq!(c.trails()[0].signature.tokens, vec![1]);
    }

    #[test]
    fn lookup_cases() {
        let c = DecisionCache::new(10);
        assert!(c.lookup("a", &sig(&[1, 2, 3]), 0.2).unwrap().hit.is_none());

        let mut c = DecisionCache::new(10);
        c.record_trail(trail("a", &[1, 2, 3], "x"), MergePolicy::Append);
        let hit = c.lookup("a", &sig(&[1, 2, 3]), 0.0).unwrap().hit.unwrap();
        assert_eq!(hit.distance, 0.0);
        assert!(c.lookup("b", &sig(&[1, 2, 3]), 1.0).unwrap().hit.is_none());
    }

    #[test]
    fn lookup_prefers_closest_within_theta() {
        // 10 tokens: one edit = 0.1, three edits = 0.3
        let base: Vec<u16> = (0..10).collect();
        let mut one = base.clone();
        one[0] = 99;
        let mut three = base.clone();
        three[..3].copy_from_slice(&[99, 98, 97]);
        let mut c = DecisionCache::new(10);
        c.record_trail(trail("a", &three, "far"), MergePolicy::Append);
        c.record_trail(trail("a", &one, "near"), MergePolicy::Append);
        let hit = c.lookup("a", &sig(&base), 0.2).unwrap().hit.unwrap();
        assert!((hit.distance - 0.1).abs() < 1e-12);
        assert_eq!(hit.trail.assignment.get(&"m".into()).unwrap().as_str(), "near");
        assert_eq!(c.lookup("a", &sig(&base), 0.2).unwrap().cells, 200);
    }

    #[test]
    fn lookup_ties_prefer_weight_then_time_then_age() {
        let mut c = DecisionCache::new(10);
        let mut slow = trail("a", &[1], "slow");
        slow.observed_cost.time_ms = 9.0;
        let mut fast = trail("a", &[1], "fast");
        fast.observed_cost.time_ms = 3.0;
        c.record_trail(slow.clone(), MergePolicy::Weighted);
        c.record_trail(fast.clone(), MergePolicy::Weighted);
        let pick = |c: &DecisionCache| c.lookup("a", &sig(&[1]), 0.0).unwrap().hit.unwrap().trail.assignment;
        assert_eq!(pick(&c), fast.assignment);
        c.record_trail(slow.clone(), MergePolicy::Weighted);
        assert_eq!(pick(&c), slow.assignment);

        let mut c = DecisionCache::new(10);
        c.record_trail(trail("a", &[1], "first"), MergePolicy::Append);
        c.record_trail(trail("a", &[1], "second"), MergePolicy::Append);
        assert_eq!(c.lookup("a", &sig(&[1]), 0.0).unwrap().hit.unwrap().index, 0);
    }

    #[test]
    fn merge_cases() {
        let t = trail("a", &[1], "x");
        let mut c = DecisionCache::new(10);
        c.record_trail(t.clone(), MergePolicy::Unique);
        let before = c.clone();
        assert!(!c.merge_caches(&[], MergePolicy::Unique));
        assert_eq!(c, before);
        c.merge_caches(&[t.clone(), t.clone()], MergePolicy::Unique);
        assert_eq!(c.len(), 1);

        let mut c = DecisionCache::new(10);
        let mut w2 = t.clone();
        w2.weight = 2;
        let mut w3 = t.clone();
        w3.weight = 3;
        c.record_trail(w2, MergePolicy::Weighted);
        c.merge_caches(&[w3], MergePolicy::Weighted);
        assert_eq!(c.trails()[0].weight, 5);
    }

    #[test]
    fn periodic_invalidation_by_age() {
        let mut c = DecisionCache::new(10);
        for (age, tok) in [(500.0, 1u16), (1500.0, 2)] {
            let mut t = trail("a", &[tok], "x");
            t.created_at = 2000.0 - age;
            c.record_trail(t, MergePolicy::Append);
        }
        let now_sig = sig(&[0]);
        let fresh = c.clone();
        let mut all_fresh = fresh.clone();
        assert!(!all_fresh.invalidate(Invalidation::Periodic { ttl_ms: 5000.0 }, 2000.0, &now_sig).unwrap());
        assert_eq!(all_fresh, fresh);
        assert!(c.invalidate(Invalidation::Periodic { ttl_ms: 1000.0 }, 2000.0, &now_sig).unwrap());
        assert_eq!(c.len(), 1);
        assert_eq!(c.trails()[0].signature.tokens, vec![1]);
    }

    #[test]
    fn on_change_zero_drift_resets() {
        let mut c = DecisionCache::new(10);
        let p = Invalidation::OnChange { drift: 0.0 };
        c.invalidate(p, 0.0, &sig(&[1, 1])).unwrap();
        c.record_trail(trail("a", &[1, 1], "x"), MergePolicy::Append);
        assert!(!c.invalidate(p, 1.0, &sig(&[1, 1])).unwrap());
        assert_eq!(c.len(), 1);
        assert!(c.invalidate(p, 2.0, &sig(&[1, 2])).unwrap());
        assert!(c.is_empty());
    }

    #[test]
    fn dissemination_schedules() {
        assert!(dissemination_events(Dissemination::OnChange, &[], 0.0, 2000.0).is_empty());
        let p = Dissemination::Periodic { interval_ms: 500.0 };
        assert_eq!(dissemination_events(p, &[], 0.0, 2000.0).len(), 4);
        let ev = [CacheEvent::LookupMiss { at: 3.0 }, CacheEvent::Changed { at: 4.0 }];
        assert_eq!(
            dissemination_events(Dissemination::OnDemand, &ev, 0.0, 10.0),
            vec![SendEvent::Request { at: 3.0 }]
        );
        assert_eq!(
            dissemination_events(Dissemination::OnChange, &ev, 0.0, 10.0),
            vec![SendEvent::Broadcast { at: 4.0 }]
        );
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let mut c = DecisionCache::new(3);
        c.record_trail(trail("a", &[1, 2], "x"), MergePolicy::Append);
        let back = DecisionCache::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_json().contains("\"tokens\""));
        let bad = r#"{"trails":[],"capacity":0}"#;
        assert!(DecisionCache::from_json(bad).is_err());
    }

    #[test]
    fn policies_validate() {
        let mut p = CachePolicies::default();
        assert!(p.validate().is_ok());
        p.invalidation = Invalidation::OnChange { drift: 1.5 };
        assert!(p.validate().is_err());
        p.invalidation = Invalidation::Periodic { ttl_ms: 0.0 };
        assert!(p.validate().is_err());
    }
}

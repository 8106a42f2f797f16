//! Devices, links and the context signatures that key the decision cache.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ContextError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Self {
        DeviceId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        DeviceId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Source,
    SpcMember,
    RemoteCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: DeviceId,
    /// Work units per millisecond.
    pub speed: f64,
    /// Fraction of the CPU already busy.
    pub load: f64,
    pub battery: f64,
    /// Recorded but not used by any decision.
    pub memory: u64,
    pub kind: DeviceKind,
}

impl DeviceProfile {
    pub fn new(id: impl Into<String>, speed: f64, kind: DeviceKind) -> Self {
        DeviceProfile {
            id: DeviceId::new(id),
            speed,
            load: 0.0,
            battery: 1.0,
            memory: 1 << 30,
            kind,
        }
    }

    pub fn with_load(mut self, load: f64) -> Self {
        self.load = load;
        self
    }

    pub fn with_battery(mut self, battery: f64) -> Self {
        self.battery = battery;
        self
    }

    pub fn effective_speed(&self) -> f64 {
        self.speed * (1.0 - self.load)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        let bad = |why: &str| Err(ContextError::InvalidDevice(self.id.clone(), why.into()));
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("speed must be positive");
        }
        if !(0.0..=1.0).contains(&self.load) {
            return bad("load must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.battery) {
            return bad("battery must lie in [0, 1]");
        }
        if self.memory == 0 {
            return bad("memory must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: DeviceId,
    pub to: DeviceId,
    /// Bytes per millisecond.
    pub bandwidth: f64,
    /// Milliseconds.
    pub latency: f64,
}

impl Link {
    pub fn new(from: impl Into<String>, to: impl Into<String>, bandwidth: f64, latency: f64) -> Self {
        Link {
            from: DeviceId::new(from),
            to: DeviceId::new(to),
            bandwidth,
            latency,
        }
    }

    pub fn self_link(d: &DeviceId) -> Self {
        Link {
            from: d.clone(),
            to: d.clone(),
            bandwidth: f64::INFINITY,
            latency: 0.0,
        }
    }

    pub fn is_self(&self) -> bool {
        self.from == self.to
    }
}

/// `latency + bytes / bandwidth`; zero on a self-link.
pub fn transfer_time(bytes: u64, link: &Link) -> f64 {
    if link.is_self() {
        0.0
    } else {
        link.latency + bytes as f64 / link.bandwidth
    }
}

/// The devices one source can see plus the links among them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpcTopology {
    devices: BTreeMap<DeviceId, DeviceProfile>,
    links: BTreeMap<(DeviceId, DeviceId), Link>,
    source: DeviceId,
}

impl SpcTopology {
    pub fn new(
        devices: impl IntoIterator<Item = DeviceProfile>,
        links: impl IntoIterator<Item = Link>,
    ) -> Result<Self, ContextError> {
        let devices: BTreeMap<DeviceId, DeviceProfile> =
            devices.into_iter().map(|d| (d.id.clone(), d)).collect();
        for d in devices.values() {
            d.validate()?;
        }
        let sources: Vec<&DeviceId> = devices
            .values()
            .filter(|d| d.kind == DeviceKind::Source)
            .map(|d| &d.id)
            .collect();
        if sources.len() != 1 {
            return Err(ContextError::SourceCount(sources.len()));
        }
        let source = sources[0].clone();

        let mut map = BTreeMap::new();
        for l in links {
            if !devices.contains_key(&l.from) {
                return Err(ContextError::UnknownDevice(l.from.clone()));
            }
            if !devices.contains_key(&l.to) {
                return Err(ContextError::UnknownDevice(l.to.clone()));
            }
            if l.is_self() {
                continue;
            }
            if !(l.bandwidth > 0.0) || !(l.latency >= 0.0) {
                return Err(ContextError::InvalidLink(
                    l.from.clone(),
                    l.to.clone(),
                    "bandwidth must be positive and latency non-negative".into(),
                ));
            }
            map.insert((l.from.clone(), l.to.clone()), l);
        }
        for d in devices.keys().filter(|d| **d != source) {
            for pair in [(source.clone(), d.clone()), (d.clone(), source.clone())] {
                if !map.contains_key(&pair) {
                    return Err(ContextError::InvalidLink(
                        pair.0,
                        pair.1,
                        "every candidate needs links to and from the source".into(),
                    ));
                }
            }
        }
        Ok(SpcTopology {
            devices,
            links: map,
            source,
        })
    }

    pub fn source(&self) -> &DeviceId {
        &self.source
    }

    pub fn source_profile(&self) -> &DeviceProfile {
        &self.devices[&self.source]
    }

    pub fn device(&self, id: &DeviceId) -> Option<&DeviceProfile> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceProfile> {
        self.devices.values()
    }

    /// Every device a method may run on: the source first, then the others
    /// in id order.
    pub fn candidates(&self) -> Vec<DeviceId> {
        let mut out = vec![self.source.clone()];
        out.extend(self.devices.keys().filter(|d| **d != self.source).cloned());
        out
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn contains(&self, id: &DeviceId) -> bool {
        self.devices.contains_key(id)
    }

    pub fn link(&self, from: &DeviceId, to: &DeviceId) -> Option<Link> {
        if from == to {
            return self.devices.contains_key(from).then(|| Link::self_link(from));
        }
        self.links.get(&(from.clone(), to.clone())).cloned()
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }
}

/// Bucket edges for each context quantity. A value `x` falls in bucket
/// `#{edges e : e <= x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bucketing {
    pub speed: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub latency: Vec<f64>,
    pub battery: Vec<f64>,
    pub load: Vec<f64>,
    /// Number of distinct app tokens.
    pub app_tokens: u16,
}

impl Default for Bucketing {
    fn default() -> Self {
        Bucketing {
            speed: vec![2.5, 10.0, 40.0],
            bandwidth: vec![10.0, 100.0, 1000.0],
            latency: vec![2.0, 10.0, 50.0],
            battery: vec![1.0 / 3.0, 2.0 / 3.0],
            load: vec![1.0 / 3.0, 2.0 / 3.0],
            app_tokens: 64,
        }
    }
}

impl Bucketing {
    pub fn bucket(edges: &[f64], x: f64) -> u16 {
        edges.iter().filter(|&&e| e <= x).count() as u16
    }

    /// Stable hash of the configuration; signatures carry it so that
    /// distances are only taken between comparable token streams.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for edges in [&self.speed, &self.bandwidth, &self.latency, &self.battery, &self.load] {
            h.write(&(edges.len() as u64).to_le_bytes());
            for e in edges.iter() {
                h.write(&e.to_bits().to_le_bytes());
            }
        }
        h.write(&self.app_tokens.to_le_bytes());
        h.finish()
    }

    pub fn app_token(&self, app: &str) -> u16 {
        let mut h = Fnv::new();
        h.write(app.as_bytes());
        (h.finish() % self.app_tokens.max(1) as u64) as u16
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, edges) in [
            ("speed", &self.speed),
            ("bandwidth", &self.bandwidth),
            ("latency", &self.latency),
            ("battery", &self.battery),
            ("load", &self.load),
        ] {
            if edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(format!("bucket edges for {name} must be strictly increasing"));
            }
        }
        if self.app_tokens == 0 {
            return Err("app_tokens must be positive".into());
        }
        Ok(())
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Tokens per device group in a signature.
pub const GROUP_TOKENS: usize = 5;

/// Discretized context: `[app, group(source), group(other)...]`, where each
/// group is `[speed, bandwidth, latency, battery, load]` buckets and the
/// other devices appear in id order. Bandwidth and latency are those of the
/// link from the source; the source's own group uses the self-link.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextSignature {
    pub tokens: Vec<u16>,
    pub bucketing: u64,
}

pub fn make_signature(topology: &SpcTopology, app: &str, buckets: &Bucketing) -> ContextSignature {
    let src = topology.source();
    let mut tokens = Vec::with_capacity(1 + GROUP_TOKENS * topology.len());
    tokens.push(buckets.app_token(app));
    for id in topology.candidates() {
        let d = topology.device(&id).expect("candidate exists");
        let link = topology.link(src, &id).expect("topology links the source to every candidate");
        let bw = if link.is_self() { f64::INFINITY } else { link.bandwidth };
        tokens.extend([
            Bucketing::bucket(&buckets.speed, d.speed),
            Bucketing::bucket(&buckets.bandwidth, bw),
            Bucketing::bucket(&buckets.latency, link.latency),
            Bucketing::bucket(&buckets.battery, d.battery),
            Bucketing::bucket(&buckets.load, d.load),
        ]);
    }
    ContextSignature {
        tokens,
        bucketing: buckets.fingerprint(),
    }
}

/// Token edit distance divided by the longer length; 0 iff equal.
pub fn signature_distance(a: &ContextSignature, b: &ContextSignature) -> Result<f64, ContextError> {
    if a.bucketing != b.bucketing {
        return Err(ContextError::IncompatibleBucketing);
    }
    let longest = a.tokens.len().max(b.tokens.len());
    if longest == 0 {
        return Ok(0.0);
    }
    let d = strsim::generic_levenshtein(&a.tokens, &b.tokens);
    Ok(d as f64 / longest as f64)
}

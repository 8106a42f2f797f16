use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::events::{EventKind, EventQueue, Message, Payload};
use super::metrics::{CacheOutcome, MessageCounts, MetricsRecord, RunRecord, StepRecord};
use super::neighbors::NeighborTable;
use crate::aco::{aco_partition, decide_next, AcoParams};
use crate::cache::{CacheEvent, DecisionCache, Dissemination, ExecutionTrail, Invalidation, ObservedCost, SendEvent};
use crate::context::{make_signature, transfer_time, ContextSignature, DeviceId, DeviceKind, DeviceProfile, SpcTopology};
use crate::error::SimError;
use crate::expand::{expand_with, Assignment, CostModel};
use crate::graph::CallGraph;
use crate::scenario::{mix, ChurnAction, DecisionMode, Phase, ScenarioConfig, Targets};

/// Step index used to seed whole-graph decisions.
const WHOLE_PLAN: usize = 0xf_ffff;

/// Runs a validated scenario to completion (or to its horizon).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsRecord, SimError> {
    cfg.validate()?;
    let mut sim = Simulator::new(cfg)?;
    sim.run()?;
    Ok(sim.finish())
}

struct RunPlan {
    app: String,
    graph: Arc<CallGraph>,
    device: DeviceId,
    phase: Phase,
    input_seed: u64,
    repetition: u32,
    start_ms: f64,
    gap_ms: f64,
}

struct DeviceState {
    profile: DeviceProfile,
    alive: bool,
    epoch: u64,
    neighbors: NeighborTable,
    cache: DecisionCache,
    /// Latest trails received from each peer, already re-based.
    peers: BTreeMap<DeviceId, Vec<ExecutionTrail>>,
    /// Extra load from served work: `extra · exp(-(t - extra_at) / decay)`.
    extra: f64,
    extra_at: f64,
    noise: f64,
    churn_rng: ChaCha8Rng,
}

struct InFlight {
    step: usize,
    device: DeviceId,
    prev: DeviceId,
    dispatched_at: f64,
    compute: f64,
    transfer: f64,
    decision: f64,
    wasted: f64,
    failed: bool,
    token: u64,
}

struct ActiveRun {
    index: usize,
    start: f64,
    signature: Option<ContextSignature>,
    plan: Option<Assignment>,
    cache: CacheOutcome,
    executed: Vec<(crate::graph::MethodId, DeviceId)>,
    steps: Vec<StepRecord>,
    pending_decision: f64,
    inflight: Option<InFlight>,
    cpu: f64,
    wall_ns: u128,
}

struct Simulator<'a> {
    cfg: &'a ScenarioConfig,
    queue: EventQueue,
    devices: BTreeMap<DeviceId, DeviceState>,
    plans: Vec<RunPlan>,
    active: Option<ActiveRun>,
    records: Vec<RunRecord>,
    next_token: u64,
    messages: MessageCounts,
    lookups: u64,
    hits: u64,
    horizon_exceeded: bool,
    model: CostModel,
    churn_subjects: Vec<DeviceId>,
}

#[cfg(not(target_arch = "wasm32"))]
struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    fn ns(&self) -> u128 {
        self.0.elapsed().as_nanos()
    }
}

#[cfg(target_arch = "wasm32")]
struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }

    fn ns(&self) -> u128 {
        0
    }
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self, SimError> {
        let mut graphs: BTreeMap<(usize, u64), Arc<CallGraph>> = BTreeMap::new();
        let mut plans = Vec::new();
        for (i, spec) in cfg.apps.iter().enumerate() {
            let device = spec.device.clone().unwrap_or_else(|| cfg.source().id.clone());
            for &input in &spec.input_seeds {
                let graph = match graphs.get(&(i, input)) {
                    Some(g) => g.clone(),
                    None => {
                        let g = Arc::new(spec.build_graph(cfg.base_dir.as_deref(), cfg.seed, input)?);
                        graphs.insert((i, input), g.clone());
                        g
                    }
                };
                for rep in 0..spec.repetitions {
                    plans.push(RunPlan {
                        app: spec.app_name(),
                        graph: graph.clone(),
                        device: device.clone(),
                        phase: spec.phase,
                        input_seed: input,
                        repetition: rep,
                        start_ms: spec.start_ms,
                        gap_ms: spec.gap_ms,
                    });
                }
            }
        }

        let devices = cfg
            .devices
            .iter()
            .map(|d| {
                let state = DeviceState {
                    profile: d.profile(),
                    alive: false,
                    epoch: 0,
                    neighbors: NeighborTable::new(),
                    cache: DecisionCache::new(cfg.cache.capacity),
                    peers: BTreeMap::new(),
                    extra: 0.0,
                    extra_at: 0.0,
                    noise: 0.0,
                    churn_rng: ChaCha8Rng::seed_from_u64(mix(cfg.seed, fnv(d.id.as_str()))),
                };
                (d.id.clone(), state)
            })
            .collect();

        let churn_subjects = match &cfg.churn.process {
            Some(p) if p.devices.is_empty() => cfg
                .devices
                .iter()
                .filter(|d| d.kind == DeviceKind::SpcMember)
                .map(|d| d.id.clone())
                .collect(),
            Some(p) => p.devices.clone(),
            None => Vec::new(),
        };

        Ok(Simulator {
            cfg,
            queue: EventQueue::new(),
            devices,
            plans,
            active: None,
            records: Vec::new(),
            next_token: 0,
            messages: MessageCounts::default(),
            lookups: 0,
            hits: 0,
            horizon_exceeded: false,
            model: CostModel {
                lambda: cfg.decision.lambda,
                marshal_per_byte: cfg.decision.marshal_per_byte,
            },
            churn_subjects,
        })
    }

    fn sharing(&self) -> bool {
        self.cfg.decision.mode == DecisionMode::CacheCollab
    }

    fn done(&self) -> bool {
        self.active.is_none() && self.records.len() == self.plans.len()
    }

    fn run(&mut self) -> Result<(), SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.cfg.seed, 0xbeac0));
        let period = self.cfg.discovery.beacon_period_ms;
        let initial: Vec<DeviceId> = self
            .cfg
            .devices
            .iter()
            .filter(|d| d.present)
            .map(|d| d.id.clone())
            .collect();
        for id in initial {
            let offset = rng.gen_range(0.0..period);
            self.join(&id, offset);
        }
        for e in &self.cfg.churn.events {
            let kind = match e.action {
                ChurnAction::Join => EventKind::DeviceJoin(e.device.clone()),
                ChurnAction::Leave => EventKind::DeviceLeave(e.device.clone()),
            };
            self.queue.schedule(e.at_ms, kind);
        }
        for id in self.churn_subjects.clone() {
            if self.devices[&id].alive {
                self.schedule_churn(&id, 0.0, ChurnAction::Leave);
            }
        }
        if let Some(first) = self.plans.first() {
            self.queue.schedule(first.start_ms, EventKind::AppStart(0));
        }

        while !self.done() {
            let Some(at) = self.queue.peek_time() else { break };
            if at > self.cfg.horizon_ms {
                self.horizon_exceeded = true;
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.handle(ev.kind)?;
        }
        Ok(())
    }

    fn finish(self) -> MetricsRecord {
        MetricsRecord {
            runs: self.records,
            messages: self.messages,
            lookups: self.lookups,
            hits: self.hits,
            horizon_exceeded: self.horizon_exceeded,
            end_ms: self.queue.now(),
        }
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        let now = self.queue.now();
        match kind {
            EventKind::DeviceJoin(id) => {
                if !self.devices[&id].alive {
                    self.join(&id, now);
                    if self.churn_subjects.contains(&id) {
                        self.schedule_churn(&id, now, ChurnAction::Leave);
                    }
                }
            }
            EventKind::DeviceLeave(id) => {
                if self.devices[&id].alive {
                    self.leave(&id, now)?;
                    if self.churn_subjects.contains(&id) {
                        self.schedule_churn(&id, now, ChurnAction::Join);
                    }
                }
            }
            EventKind::Beacon { device, epoch } => self.beacon(&device, epoch, now),
            EventKind::CacheTick { device, epoch } => self.cache_tick(&device, epoch, now),
            EventKind::MessageDelivery(m) => self.deliver(m, now),
            EventKind::AppStart(i) => self.start_run(i, now)?,
            EventKind::MethodComplete { run, token } => self.complete_method(run, token, now)?,
        }
        Ok(())
    }

    // ----- presence and discovery -------------------------------------

    fn join(&mut self, id: &DeviceId, at: f64) {
        let cloud = self.cfg.device(id).is_some_and(|d| d.kind == DeviceKind::RemoteCloud);
        let d = self.devices.get_mut(id).expect("known device");
        d.alive = true;
        d.epoch += 1;
        d.neighbors.clear();
        let epoch = d.epoch;
        if cloud {
            return;
        }
        self.queue.schedule(
            at,
            EventKind::Beacon {
                device: id.clone(),
                epoch,
            },
        );
        if let (true, Dissemination::Periodic { interval_ms }) = (self.sharing(), self.cfg.cache.policies.dissemination) {
            self.queue.schedule(
                at + interval_ms,
                EventKind::CacheTick {
                    device: id.clone(),
                    epoch,
                },
            );
        }
    }

    fn schedule_churn(&mut self, id: &DeviceId, now: f64, action: ChurnAction) {
        let p = self.cfg.churn.process.as_ref().expect("churn process configured");
        let mean = match action {
            ChurnAction::Leave => p.mean_up_ms,
            ChurnAction::Join => p.mean_down_ms,
        };
        let d = self.devices.get_mut(id).expect("known device");
        let wait: f64 = Exp::new(1.0 / mean).expect("positive mean").sample(&mut d.churn_rng);
        let kind = match action {
            ChurnAction::Leave => EventKind::DeviceLeave(id.clone()),
            ChurnAction::Join => EventKind::DeviceJoin(id.clone()),
        };
        self.queue.schedule(now + wait, kind);
    }

    fn leave(&mut self, id: &DeviceId, now: f64) -> Result<(), SimError> {
        self.devices.get_mut(id).expect("known device").alive = false;
        let Some(run) = self.active.as_ref() else { return Ok(()) };
        let launcher = &self.plans[run.index].device;
        if launcher == id {
            self.abort_run(now);
            return Ok(());
        }
        let hit = run.inflight.as_ref().is_some_and(|f| &f.device == id);
        if hit {
            self.restart_locally(now);
        }
        Ok(())
    }

    fn beacon(&mut self, id: &DeviceId, epoch: u64, now: f64) {
        let d = &self.devices[id];
        if !d.alive || d.epoch != epoch || self.done() {
            return;
        }
        self.messages.beacon += 1;
        let receivers: Vec<DeviceId> = self
            .devices
            .iter()
            .filter(|(other, s)| *other != id && s.alive && s.profile.kind != DeviceKind::RemoteCloud)
            .map(|(k, _)| k.clone())
            .collect();
        for r in receivers {
            self.devices.get_mut(&r).unwrap().neighbors.stamp(id, now);
        }
        self.queue.schedule(
            now + self.cfg.discovery.beacon_period_ms,
            EventKind::Beacon {
                device: id.clone(),
                epoch,
            },
        );
    }

    fn visible_neighbors(&self, id: &DeviceId, now: f64) -> Vec<DeviceId> {
        self.devices[id].neighbors.visible(now, self.cfg.discovery.ttl_ms)
    }

    // ----- context --------------------------------------------------------

    fn current_load(&self, id: &DeviceId, now: f64) -> f64 {
        let d = &self.devices[id];
        let extra = if d.extra > 0.0 {
            d.extra * (-(now - d.extra_at) / self.cfg.load.decay_ms).exp()
        } else {
            0.0
        };
        (d.profile.load + d.noise + extra).clamp(0.0, self.cfg.load.max_load)
    }

    /// What `launcher` can see right now: itself as the source, visible
    /// proximity neighbours and reachable clouds, filtered by targets.
    fn snapshot(&self, launcher: &DeviceId, now: f64) -> Result<SpcTopology, SimError> {
        let targets = self.cfg.decision.targets;
        let mut ids = vec![launcher.clone()];
        if matches!(targets, Targets::All | Targets::Spc) {
            ids.extend(self.visible_neighbors(launcher, now));
        }
        if matches!(targets, Targets::All | Targets::Remote) {
            ids.extend(
                self.devices
                    .iter()
                    .filter(|(k, s)| s.alive && s.profile.kind == DeviceKind::RemoteCloud && *k != launcher)
                    .map(|(k, _)| k.clone()),
            );
        }
        let profiles = ids.iter().map(|id| {
            let mut p = self.devices[id].profile.clone();
            p.load = self.current_load(id, now);
            p.kind = if id == launcher {
                DeviceKind::Source
            } else if p.kind == DeviceKind::RemoteCloud {
                DeviceKind::RemoteCloud
            } else {
                DeviceKind::SpcMember
            };
            p
        });
        let links = ids
            .iter()
            .flat_map(|a| ids.iter().filter(move |b| *b != a).map(move |b| (a, b)))
            .map(|(a, b)| self.cfg.link(a, b));
        Ok(SpcTopology::new(profiles.collect::<Vec<_>>(), links.collect::<Vec<_>>())?)
    }

    fn aco_params(&self, run: usize, step: usize) -> AcoParams {
        let base = mix(self.cfg.seed, self.cfg.decision.aco.seed);
        AcoParams {
            seed: mix(base, (run as u64) << 20 | step as u64),
            ..self.cfg.decision.aco
        }
    }

    // ----- runs -------------------------------------------------------------

    fn start_run(&mut self, index: usize, now: f64) -> Result<(), SimError> {
        let launcher = self.plans[index].device.clone();
        if !self.devices[&launcher].alive {
            self.active = Some(self.new_active(index, now));
            self.abort_run(now);
            return Ok(());
        }
        if self.cfg.load.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(self.cfg.seed, 0x10ad_0000 + index as u64));
            let n = self.cfg.load.noise;
            for d in self.devices.values_mut() {
                d.noise = rng.gen_range(-n..=n);
            }
        }
        let mut run = self.new_active(index, now);
        let topo = self.snapshot(&launcher, now)?;
        let phase = self.plans[index].phase;
        let mode = self.cfg.decision.mode;
        let needs_plan = phase == Phase::Warmup || mode != DecisionMode::Aco;
        if topo.len() > 1 && needs_plan {
            let app = self.plans[index].app.clone();
            let sig = make_signature(&topo, &app, &self.cfg.bucketing);
            let watch = Stopwatch::start();
            if phase == Phase::Warmup {
                let (plan, ms) = self.full_aco(index, &topo)?;
                run.plan = Some(plan);
                run.pending_decision += ms;
                run.cache = CacheOutcome::Recorded;
            } else {
                let (found, ms) = self.cache_lookup(&launcher, &app, &sig, now)?;
                run.pending_decision += ms;
                match found {
                    Some(plan) => {
                        run.plan = Some(plan);
                        run.cache = CacheOutcome::Hit;
                    }
                    None => {
                        if self.sharing() {
                            self.react(&launcher, CacheEvent::LookupMiss { at: now }, now);
                        }
                        let (plan, ms) = self.full_aco(index, &topo)?;
                        run.plan = Some(plan);
                        run.pending_decision += ms;
                        run.cache = CacheOutcome::Miss;
                    }
                }
            }
            run.wall_ns += watch.ns();
            run.signature = Some(sig);
        }
        self.active = Some(run);
        self.dispatch(now)
    }

    fn new_active(&self, index: usize, now: f64) -> ActiveRun {
        ActiveRun {
            index,
            start: now,
            signature: None,
            plan: None,
            cache: CacheOutcome::None,
            executed: Vec::new(),
            steps: Vec::new(),
            pending_decision: 0.0,
            inflight: None,
            cpu: 0.0,
            wall_ns: 0,
        }
    }

    fn full_aco(&self, index: usize, topo: &SpcTopology) -> Result<(Assignment, f64), SimError> {
        let graph = &self.plans[index].graph;
        let eg = expand_with(graph, topo, &self.model)?;
        let part = aco_partition(&eg, &self.aco_params(index, WHOLE_PLAN))?;
        Ok((part.assignment, self.cfg.overhead.aco_ms(part.stats.operations)))
    }

    /// Own cache, or own cache merged with peers' snapshots when sharing.
    fn cache_lookup(
        &mut self,
        id: &DeviceId,
        app: &str,
        sig: &ContextSignature,
        now: f64,
    ) -> Result<(Option<Assignment>, f64), SimError> {
        let policies = self.cfg.cache.policies;
        let sharing = self.sharing();
        let d = self.devices.get_mut(id).expect("known device");
        let before = d.cache.checkpoint().cloned();
        let dropped = d.cache.invalidate(policies.invalidation, now, sig)?;
        match policies.invalidation {
            Invalidation::Periodic { ttl_ms } => {
                for trails in d.peers.values_mut() {
                    trails.retain(|t| now - t.created_at <= ttl_ms);
                }
            }
            Invalidation::OnChange { .. } => {
                if before.is_some() && d.cache.checkpoint() != before.as_ref() {
                    d.peers.clear();
                }
            }
        }
        let view = if sharing {
            let mut merged = DecisionCache::new(self.cfg.cache.collab_capacity);
            merged.merge_caches(d.cache.trails(), policies.merge);
            for trails in d.peers.values() {
                merged.merge_caches(trails, policies.merge);
            }
            merged
        } else {
            d.cache.clone()
        };
        let found = view.lookup(app, sig, self.cfg.cache.theta)?;
        self.lookups += 1;
        let ms = self.cfg.overhead.lookup_ms(found.cells);
        if dropped && sharing {
            self.react(id, CacheEvent::Changed { at: now }, now);
        }
        Ok(match found.hit {
            Some(hit) => {
                self.hits += 1;
                (Some(hit.trail.assignment), ms)
            }
            None => (None, ms),
        })
    }

    /// Picks the device for the next method and schedules its completion.
    fn dispatch(&mut self, now: f64) -> Result<(), SimError> {
        let run = self.active.as_ref().expect("active run");
        let index = run.index;
        let plan = &self.plans[index];
        let launcher = plan.device.clone();
        let graph = plan.graph.clone();
        let step = run.executed.len();
        let method = graph.topo_order()[step].clone();
        let node = graph.node(&method).expect("method in graph");

        let mut decision = std::mem::take(&mut self.active.as_mut().unwrap().pending_decision);
        let mut wall = 0u128;
        let device = if node.pinned {
            launcher.clone()
        } else {
            let topo = self.snapshot(&launcher, now)?;
            let planned = self.active.as_ref().unwrap().plan.as_ref().and_then(|p| p.get(&method).cloned());
            let planned = planned.map(|d| if !self.devices.contains_key(&d) { launcher.clone() } else { d });
            match planned {
                Some(d) if topo.contains(&d) || d == launcher => {
                    decision += self.cfg.overhead.plan_step_ms;
                    d
                }
                _ if topo.len() == 1 => launcher.clone(),
                _ => {
                    let watch = Stopwatch::start();
                    let executed = self.active.as_ref().unwrap().executed.clone();
                    let next = decide_next(&graph, &executed, &topo, &self.model, &self.aco_params(index, step))?;
                    wall += watch.ns();
                    decision += self.cfg.overhead.aco_ms(next.stats.operations);
                    next.device
                }
            }
        };

        let prev = self
            .active
            .as_ref()
            .unwrap()
            .executed
            .last()
            .map(|(_, d)| d.clone())
            .filter(|d| self.devices[d].alive)
            .unwrap_or_else(|| launcher.clone());
        let (device, wasted, failed) = if self.devices[&device].alive {
            (device, 0.0, false)
        } else {
            (launcher.clone(), self.cfg.discovery.failure_timeout_ms, true)
        };
        let dispatched_at = now + decision + wasted;
        let (compute, transfer) = self.exec_cost(&graph, &method, &prev, &device, dispatched_at);
        let token = self.next_token;
        self.next_token += 1;
        let run = self.active.as_mut().unwrap();
        run.wall_ns += wall;
        run.inflight = Some(InFlight {
            step,
            device,
            prev,
            dispatched_at,
            compute,
            transfer,
            decision,
            wasted,
            failed,
            token,
        });
        self.queue
            .schedule(dispatched_at + transfer + compute, EventKind::MethodComplete { run: index, token });
        Ok(())
    }

    /// (compute ms, transfer ms) of running `method` on `device` with its
    /// inputs coming from `prev`.
    fn exec_cost(&self, graph: &CallGraph, method: &crate::graph::MethodId, prev: &DeviceId, device: &DeviceId, at: f64) -> (f64, f64) {
        let node = graph.node(method).expect("method in graph");
        let speed = self.devices[device].profile.speed * (1.0 - self.current_load(device, at));
        let compute = node.compute_work as f64 / speed;
        let transfer = if prev == device {
            0.0
        } else {
            transfer_time(graph.incoming_bytes(method), &self.cfg.link(prev, device))
        };
        (compute, transfer)
    }

    /// The executor of the in-flight method left: count the attempt as
    /// failed and rerun the method on the launching device.
    fn restart_locally(&mut self, now: f64) {
        let index = self.active.as_ref().unwrap().index;
        let launcher = self.plans[index].device.clone();
        let graph = self.plans[index].graph.clone();
        let f = self.active.as_mut().unwrap().inflight.take().expect("in-flight method");
        let restart_at = now.max(f.dispatched_at);
        let lost = restart_at - f.dispatched_at;
        let method = graph.topo_order()[f.step].clone();
        let prev = if self.devices[&f.prev].alive { f.prev.clone() } else { launcher.clone() };
        let (compute, transfer) = self.exec_cost(&graph, &method, &prev, &launcher, restart_at);
        let token = self.next_token;
        self.next_token += 1;
        self.active.as_mut().unwrap().inflight = Some(InFlight {
            step: f.step,
            device: launcher,
            prev,
            dispatched_at: restart_at,
            compute,
            transfer,
            decision: f.decision,
            wasted: f.wasted + lost,
            failed: true,
            token,
        });
        self.queue
            .schedule(restart_at + transfer + compute, EventKind::MethodComplete { run: index, token });
    }

    fn complete_method(&mut self, index: usize, token: u64, now: f64) -> Result<(), SimError> {
        let Some(run) = self.active.as_mut() else { return Ok(()) };
        if run.index != index || run.inflight.as_ref().is_none_or(|f| f.token != token) {
            return Ok(());
        }
        let f = run.inflight.take().unwrap();
        let plan = &self.plans[index];
        let method = plan.graph.topo_order()[f.step].clone();
        let node = plan.graph.node(&method).unwrap();
        let offloaded = f.device != plan.device;
        run.cpu += if offloaded {
            self.model.marshal_per_byte * plan.graph.incoming_bytes(&method) as f64
        } else {
            node.compute_work as f64
        };
        run.executed.push((method.clone(), f.device.clone()));
        run.steps.push(StepRecord {
            method,
            device: f.device,
            offloaded,
            failed: f.failed,
            decision_ms: f.decision,
            compute_ms: f.compute,
            transfer_ms: f.transfer,
            wasted_ms: f.wasted,
        });
        if run.executed.len() < plan.graph.len() {
            self.dispatch(now)
        } else {
            self.finish_run(now);
            Ok(())
        }
    }

    fn record(&self, run: &ActiveRun, now: f64, aborted: bool) -> RunRecord {
        let plan = &self.plans[run.index];
        let sum = |f: fn(&StepRecord) -> f64| run.steps.iter().map(f).sum::<f64>();
        RunRecord {
            index: run.index,
            app: plan.app.clone(),
            phase: plan.phase,
            device: plan.device.clone(),
            input_seed: plan.input_seed,
            repetition: plan.repetition,
            start_ms: run.start,
            end_ms: now,
            end_to_end_ms: now - run.start,
            compute_ms: sum(|s| s.compute_ms),
            transfer_ms: sum(|s| s.transfer_ms),
            decision_ms: sum(|s| s.decision_ms),
            wasted_ms: sum(|s| s.wasted_ms),
            cache: run.cache,
            aborted,
            steps: run.steps.clone(),
            decision_wall_ns: run.wall_ns,
        }
    }

    fn abort_run(&mut self, now: f64) {
        let run = self.active.take().expect("active run");
        let rec = self.record(&run, now, true);
        self.records.push(rec);
        self.schedule_next(run.index, now);
    }

    fn finish_run(&mut self, now: f64) {
        let run = self.active.take().expect("active run");
        let rec = self.record(&run, now, false);
        let plan = &self.plans[run.index];
        let launcher = plan.device.clone();

        if let (Some(sig), CacheOutcome::Hit | CacheOutcome::Miss | CacheOutcome::Recorded) = (&run.signature, run.cache) {
            let mut assignment = Assignment::default();
            for (m, d) in &run.executed {
                assignment.insert(m.clone(), d.clone());
            }
            let trail = ExecutionTrail {
                app: plan.app.clone(),
                signature: sig.clone(),
                assignment,
                observed_cost: ObservedCost {
                    time_ms: rec.compute_ms + rec.transfer_ms,
                    cpu: run.cpu,
                },
                weight: 1,
                created_at: now,
            };
            let merge = self.cfg.cache.policies.merge;
            let changed = self.devices.get_mut(&launcher).unwrap().cache.record_trail(trail, merge);
            if changed && self.sharing() {
                self.react(&launcher, CacheEvent::Changed { at: now }, now);
            }
        }

        if self.cfg.load.bump > 0.0 {
            // Remote clouds are provisioned elastically and do not slow down.
            let mut served: Vec<&DeviceId> = rec
                .steps
                .iter()
                .filter(|s| s.offloaded && self.devices[&s.device].profile.kind != DeviceKind::RemoteCloud)
                .map(|s| &s.device)
                .collect();
            served.sort();
            served.dedup();
            for id in served {
                let load_now = {
                    let d = &self.devices[id];
                    if d.extra > 0.0 {
                        d.extra * (-(now - d.extra_at) / self.cfg.load.decay_ms).exp()
                    } else {
                        0.0
                    }
                };
                let d = self.devices.get_mut(id).unwrap();
                d.extra = load_now + self.cfg.load.bump;
                d.extra_at = now;
            }
        }

        self.records.push(rec);
        self.schedule_next(run.index, now);
    }

    fn schedule_next(&mut self, index: usize, now: f64) {
        if let Some(next) = self.plans.get(index + 1) {
            let at = next.start_ms.max(now + next.gap_ms);
            self.queue.schedule(at, EventKind::AppStart(index + 1));
        }
    }

    // ----- cache sharing ----------------------------------------------------

    fn react(&mut self, id: &DeviceId, ev: CacheEvent, now: f64) {
        match self.cfg.cache.policies.dissemination.react(ev) {
            Some(SendEvent::Broadcast { .. }) => self.broadcast_push(id, now),
            Some(SendEvent::Request { .. }) => {
                self.messages.cache_request += 1;
                for n in self.visible_neighbors(id, now) {
                    self.send(id, &n, Payload::Request, now);
                }
            }
            None => {}
        }
    }

    fn broadcast_push(&mut self, id: &DeviceId, now: f64) {
        self.messages.cache_push += 1;
        let trails = self.devices[id].cache.trails().to_vec();
        for n in self.visible_neighbors(id, now) {
            self.send(id, &n, Payload::Push(trails.clone()), now);
        }
    }

    fn send(&mut self, from: &DeviceId, to: &DeviceId, payload: Payload, now: f64) {
        let n = match &payload {
            Payload::Push(t) | Payload::Reply(t) => t.len() as u64,
            Payload::Request => 0,
        };
        let bytes = self.cfg.discovery.trail_bytes * n.max(1);
        let delay = transfer_time(bytes, &self.cfg.link(from, to));
        self.queue.schedule(
            now + delay,
            EventKind::MessageDelivery(Message {
                from: from.clone(),
                to: to.clone(),
                payload,
            }),
        );
    }

    fn deliver(&mut self, m: Message, now: f64) {
        if !self.devices[&m.to].alive || self.done() {
            return;
        }
        match m.payload {
            Payload::Request => {
                if !self.devices[&m.from].alive {
                    return;
                }
                self.messages.cache_reply += 1;
                let trails = self.devices[&m.to].cache.trails().to_vec();
                self.send(&m.to, &m.from, Payload::Reply(trails), now);
            }
            Payload::Push(trails) | Payload::Reply(trails) => {
                let rebased = trails.into_iter().map(|t| rebase(t, &m.from, &m.to)).collect();
                self.devices.get_mut(&m.to).unwrap().peers.insert(m.from, rebased);
            }
        }
    }

    fn cache_tick(&mut self, id: &DeviceId, epoch: u64, now: f64) {
        let d = &self.devices[id];
        if !d.alive || d.epoch != epoch || self.done() {
            return;
        }
        self.broadcast_push(id, now);
        if let Dissemination::Periodic { interval_ms } = self.cfg.cache.policies.dissemination {
            self.queue.schedule(
                now + interval_ms,
                EventKind::CacheTick {
                    device: id.clone(),
                    epoch,
                },
            );
        }
    }
}

/// A received trail is read from the receiver's point of view: what the
/// sender ran on itself, the receiver runs on itself.
pub fn rebase(mut t: ExecutionTrail, sender: &DeviceId, receiver: &DeviceId) -> ExecutionTrail {
    for d in t.assignment.0.values_mut() {
        if d == sender {
            *d = receiver.clone();
        }
    }
    t
}

fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

//! Ant System over an [`ExpandedGraph`], the exhaustive oracle, and the
//! per-call re-decision used while an application runs.
//!
//! Each ant walks the layers from the virtual start, picking the next node
//! with probability proportional to `tau^alpha * eta^beta` where
//! `eta = 1 / (scalar + eta0)`. After every iteration all trails evaporate
//! by `rho` and the iteration-best path receives `q / path_scalar`.
//! Trails never drop below `tau_min`.
//!
//! Ant `k` of iteration `i` draws from its own ChaCha stream
//! `i * n_ants + k` of the seed, so walking ants in parallel yields the
//! same result as walking them in order.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{DeviceId, SpcTopology};
use crate::error::AcoError;
use crate::expand::{expand_residual, Assignment, CostModel, ExpandedGraph};
use crate::graph::{CallGraph, MethodId};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcoParams {
    pub n_ants: usize,
    pub n_iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub q: f64,
    pub seed: u64,
    pub tau0: f64,
    pub tau_min: f64,
    pub eta0: f64,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams {
            n_ants: 16,
            n_iterations: 50,
            alpha: 1.0,
            beta: 0.5,
            rho: 0.1,
            q: 1.0,
            seed: 0,
            tau0: 1.0,
            tau_min: 1e-3,
            eta0: 1e-6,
        }
    }
}

impl AcoParams {
    pub fn with_seed(seed: u64) -> Self {
        AcoParams {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AcoError> {
        let bad = |s: &str| Err(AcoError::InvalidParams(s.to_string()));
        if self.n_ants == 0 {
            return bad("n_ants must be positive");
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be positive");
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho must lie in (0, 1]");
        }
        if !(self.q > 0.0) {
            return bad("q must be positive");
        }
        if !(self.tau_min > 0.0) || !(self.tau0 >= self.tau_min) {
            return bad("need tau0 >= tau_min > 0");
        }
        if !(self.eta0 > 0.0) {
            return bad("eta0 must be positive");
        }
        Ok(())
    }
}

/// Pheromone per expanded-graph edge, laid out like the edge costs.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneTable {
    tau: Vec<Vec<Vec<f64>>>,
    floor: f64,
}

impl PheromoneTable {
    pub fn new(eg: &ExpandedGraph, tau0: f64, floor: f64) -> Self {
        let mut prev = 1;
        let tau = eg
            .layer_sizes()
            .into_iter()
            .map(|n| {
                let block = vec![vec![tau0; n]; prev];
                prev = n;
                block
            })
            .collect();
        PheromoneTable { tau, floor }
    }

    pub fn get(&self, layer: usize, from: usize, to: usize) -> f64 {
        self.tau[layer][from][to]
    }

    pub fn min(&self) -> f64 {
        self.tau
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn evaporate(&mut self, rho: f64) {
        let floor = self.floor;
        for v in self.tau.iter_mut().flatten().flatten() {
            *v = ((1.0 - rho) * *v).max(floor);
        }
    }

    fn deposit(&mut self, path: &[usize], amount: f64) {
        let mut prev = 0;
        for (i, &c) in path.iter().enumerate() {
            self.tau[i][prev][c] += amount;
            prev = c;
        }
    }
}

/// Work counters of one ACO run; the simulator charges decision time from
/// these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcoStats {
    /// Candidate edges scored by ants plus pheromone entries touched.
    pub operations: u64,
    pub iterations: usize,
    /// Global best scalar after each iteration.
    pub best_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub assignment: Assignment,
    pub choice: Vec<usize>,
    /// Scalarized path cost.
    pub cost: f64,
    pub stats: AcoStats,
}

struct Ant {
    path: Vec<usize>,
    scalar: f64,
}

fn walk(eg: &ExpandedGraph, tau: &PheromoneTable, p: &AcoParams, stream: u64) -> Ant {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(stream);
    let sizes = eg.layer_sizes();
    let mut path = Vec::with_capacity(sizes.len());
    let mut weights = Vec::new();
    let mut prev = 0;
    let mut scalar = 0.0;
    for (layer, &n) in sizes.iter().enumerate() {
        let costs = eg.costs_from(layer, prev);
        let pick = if n == 1 {
            0
        } else {
            weights.clear();
            weights.extend(costs.iter().enumerate().map(|(c, e)| {
                let eta = 1.0 / (e.scalar + p.eta0);
                tau.get(layer, prev, c).powf(p.alpha) * eta.powf(p.beta)
            }));
            let total: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (c, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = c;
                    break;
                }
                r -= w;
            }
            pick
        };
        scalar += costs[pick].scalar;
        path.push(pick);
        prev = pick;
    }
    Ant { path, scalar }
}

#[cfg(feature = "parallel")]
fn walk_all(eg: &ExpandedGraph, tau: &PheromoneTable, p: &AcoParams, iteration: usize) -> Vec<Ant> {
    use rayon::prelude::*;
    // Small colonies are cheaper to walk inline.
    if eg.edge_count() * p.n_ants < 4096 {
        return walk_all_sequential(eg, tau, p, iteration);
    }
    (0..p.n_ants)
        .into_par_iter()
        .map(|k| walk(eg, tau, p, (iteration * p.n_ants + k) as u64))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn walk_all(eg: &ExpandedGraph, tau: &PheromoneTable, p: &AcoParams, iteration: usize) -> Vec<Ant> {
    walk_all_sequential(eg, tau, p, iteration)
}

fn walk_all_sequential(eg: &ExpandedGraph, tau: &PheromoneTable, p: &AcoParams, iteration: usize) -> Vec<Ant> {
    (0..p.n_ants)
        .map(|k| walk(eg, tau, p, (iteration * p.n_ants + k) as u64))
        .collect()
}

fn aco_run(
    eg: &ExpandedGraph,
    params: &AcoParams,
    walker: fn(&ExpandedGraph, &PheromoneTable, &AcoParams, usize) -> Vec<Ant>,
) -> Result<(Partition, PheromoneTable), AcoError> {
    params.validate()?;
    if eg.layers().is_empty() {
        return Err(AcoError::EmptyGraph);
    }
    let mut tau = PheromoneTable::new(eg, params.tau0, params.tau_min);
    if eg.path_count() == 1 {
        let choice = vec![0; eg.layers().len()];
        let cost = eg.path_cost_indices(&choice).scalar;
        let part = Partition {
            assignment: eg.assignment_of(&choice),
            choice,
            cost,
            stats: AcoStats::default(),
        };
        return Ok((part, tau));
    }

    let steps_per_ant: u64 = eg.layer_sizes().iter().map(|&n| n as u64).sum();
    let per_iteration = steps_per_ant * params.n_ants as u64 + eg.edge_count() as u64;
    let mut best: Option<Ant> = None;
    let mut trace = Vec::with_capacity(params.n_iterations);
    for it in 0..params.n_iterations {
        let ants = walker(eg, &tau, params, it);
        let mut iter_best = &ants[0];
        for ant in &ants[1..] {
            if eg.compare_paths(&ant.path, ant.scalar, &iter_best.path, iter_best.scalar) == Ordering::Less {
                iter_best = ant;
            }
        }
        tau.evaporate(params.rho);
        tau.deposit(&iter_best.path, params.q / (iter_best.scalar + params.eta0));
        let improves = best.as_ref().is_none_or(|b| {
            eg.compare_paths(&iter_best.path, iter_best.scalar, &b.path, b.scalar) == Ordering::Less
        });
        if improves {
            best = Some(Ant {
                path: iter_best.path.clone(),
                scalar: iter_best.scalar,
            });
        }
        trace.push(best.as_ref().unwrap().scalar);
    }
    let best = best.unwrap();
    let part = Partition {
        assignment: eg.assignment_of(&best.path),
        cost: eg.path_cost_indices(&best.path).scalar,
        choice: best.path,
        stats: AcoStats {
            operations: per_iteration * params.n_iterations as u64,
            iterations: params.n_iterations,
            best_trace: trace,
        },
    };
    Ok((part, tau))
}

/// Scalar-shortest start-to-end path found by the colony.
pub fn aco_partition(eg: &ExpandedGraph, params: &AcoParams) -> Result<Partition, AcoError> {
    aco_run(eg, params, walk_all).map(|(p, _)| p)
}

/// Like [`aco_partition`] but never spreads ants across threads.
pub fn aco_partition_sequential(eg: &ExpandedGraph, params: &AcoParams) -> Result<Partition, AcoError> {
    aco_run(eg, params, walk_all_sequential).map(|(p, _)| p)
}

/// Final pheromone table of a run, for inspection.
pub fn aco_pheromones(eg: &ExpandedGraph, params: &AcoParams) -> Result<PheromoneTable, AcoError> {
    aco_run(eg, params, walk_all_sequential).map(|(_, t)| t)
}

/// Exact optimum by enumerating every path, with the same tie-break as the
/// colony.
pub fn brute_force_partition(eg: &ExpandedGraph) -> Result<Partition, AcoError> {
    brute_force_partition_capped(eg, DEFAULT_ENUMERATION_CAP)
}

pub fn brute_force_partition_capped(eg: &ExpandedGraph, cap: u128) -> Result<Partition, AcoError> {
    if eg.layers().is_empty() {
        return Err(AcoError::EmptyGraph);
    }
    let count = eg.path_count();
    if count > cap {
        return Err(AcoError::TooLarge(count, cap));
    }
    let sizes = eg.layer_sizes();
    let mut cur = vec![0usize; sizes.len()];
    let mut best = cur.clone();
    let mut best_scalar = eg.path_cost_indices(&cur).scalar;
    loop {
        // odometer increment, last layer fastest
        let mut i = sizes.len();
        loop {
            if i == 0 {
                let part = Partition {
                    assignment: eg.assignment_of(&best),
                    cost: best_scalar,
                    choice: best,
                    stats: AcoStats::default(),
                };
                return Ok(part);
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < sizes[i] {
                break;
            }
            cur[i] = 0;
        }
        let s = eg.path_cost_indices(&cur).scalar;
        if eg.compare_paths(&cur, s, &best, best_scalar) == Ordering::Less {
            best.clone_from(&cur);
            best_scalar = s;
        }
    }
}

/// Outcome of one per-call decision.
#[derive(Debug, Clone, PartialEq)]
pub struct NextDecision {
    pub method: MethodId,
    pub device: DeviceId,
    /// Full plan for the remaining methods; only the first entry is binding.
    pub plan: Assignment,
    pub stats: AcoStats,
}

/// Device for the next method, recomputed against the current topology.
///
/// `executed` is the realized prefix of the topological order. The residual
/// methods are re-expanded with the start anchored on the device that ran
/// the last executed method (or the source when that device is gone).
pub fn decide_next(
    g: &CallGraph,
    executed: &[(MethodId, DeviceId)],
    topology: &SpcTopology,
    model: &CostModel,
    params: &AcoParams,
) -> Result<NextDecision, AcoError> {
    let order = g.topo_order();
    if executed.len() >= order.len() || executed.iter().zip(order).any(|((m, _), o)| m != o) {
        return Err(AcoError::BadPrefix);
    }
    let next = &order[executed.len()];
    if g.node(next).is_some_and(|n| n.pinned) {
        let mut plan = Assignment::default();
        plan.insert(next.clone(), topology.source().clone());
        return Ok(NextDecision {
            method: next.clone(),
            device: topology.source().clone(),
            plan,
            stats: AcoStats::default(),
        });
    }
    let anchor = executed
        .last()
        .map(|(_, d)| d)
        .filter(|d| topology.contains(d))
        .unwrap_or(topology.source());
    let eg = expand_residual(g, &order[executed.len()..], anchor, topology, model)?;
    let part = aco_partition(&eg, params)?;
    Ok(NextDecision {
        method: next.clone(),
        device: part.assignment.get(next).cloned().expect("plan covers the next method"),
        plan: part.assignment,
        stats: part.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{DeviceKind, DeviceProfile, Link};
    use crate::expand::{expand, path_cost};
    use crate::graph::{build_graph, MethodNode};

    fn mesh(devices: Vec<DeviceProfile>, bw: f64, lat: f64) -> SpcTopology {
        let ids: Vec<String> = devices.iter().map(|d| d.id.0.clone()).collect();
        let links = ids
            .iter()
            .flat_map(|a| ids.iter().filter(move |b| *b != a).map(move |b| Link::new(a.clone(), b.clone(), bw, lat)))
            .collect::<Vec<_>>();
        SpcTopology::new(devices, links).unwrap()
    }

    fn chain(works: &[(&str, u64, u64)]) -> CallGraph {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, (id, w, bytes)) in works.iter().enumerate() {
            let mut n = MethodNode::new(*id, *w);
            if let Some((next, _, _)) = works.get(i + 1) {
                n = n.sends(*next, *bytes);
                edges.push(((*id).into(), (*next).into()));
            }
            nodes.push(n);
        }
        build_graph(nodes, edges).unwrap()
    }

    #[test]
    fn single_path_is_returned_without_search() {
        let g = chain(&[("a", 1, 0), ("b", 1, 0)]);
        let topo = mesh(vec![DeviceProfile::new("src", 1.0, DeviceKind::Source)], 1.0, 0.0);
        let eg = expand(&g, &topo, 0.5).unwrap();
        let p = aco_partition(&eg, &AcoParams::default()).unwrap();
        assert_eq!(p.cost, path_cost(&eg, &p.assignment).unwrap().scalar);
        assert_eq!(p.stats.operations, 0);
    }

    #[test]
    fn dominant_chain_path_found_for_all_seeds() {
        // Method 2 is heavy; B is four times faster than the source and C,
        // links are cheap, so 2@B dominates.
        let g = chain(&[("1", 1, 100), ("2", 400, 100), ("3", 1, 0)]);
        let topo = mesh(
            vec![
                DeviceProfile::new("A", 1.0, DeviceKind::Source),
                DeviceProfile::new("B", 8.0, DeviceKind::SpcMember),
                DeviceProfile::new("C", 2.0, DeviceKind::SpcMember),
            ],
            1000.0,
            1.0,
        );
        let eg = expand(&g, &topo, 0.5).unwrap();
        let oracle = brute_force_partition(&eg).unwrap();
        assert_eq!(oracle.assignment.get(&"2".into()).unwrap().as_str(), "B");
        for seed in 0..20 {
            let p = aco_partition(&eg, &AcoParams::with_seed(seed)).unwrap();
            assert_eq!(p.assignment, oracle.assignment, "seed {seed}");
        }
    }

    #[test]
    fn two_by_two_by_hand() {
        // entry(pinned) -> m -> exit(pinned); m is 10 ms locally, 3 ms
        // remotely plus 2 ms of transfer in. lambda = 1 isolates time.
        let g = chain(&[("in", 0, 200), ("m", 10, 0), ("out", 0, 0)]);
        let topo = mesh(
            vec![
                DeviceProfile::new("loc", 1.0, DeviceKind::Source),
                DeviceProfile::new("rem", 10.0 / 3.0, DeviceKind::SpcMember),
            ],
            100.0,
            0.0,
        );
        let eg = expand(&g, &topo, 1.0).unwrap();
        assert_eq!(eg.layer_sizes(), vec![1, 2, 1]);
        let times: Vec<f64> = (0..2).map(|c| eg.path_cost_indices(&[0, c, 0]).time).collect();
        assert!((times[0] - 10.0).abs() < 1e-9);
        // 3 ms of compute plus 200 B at 100 B/ms; nothing flows back
        assert!((times[1] - 5.0).abs() < 1e-9);
        let p = brute_force_partition(&eg).unwrap();
        assert_eq!(p.assignment.get(&"m".into()).unwrap().as_str(), "rem");
    }

    #[test]
    fn enumeration_cap() {
        let g = chain(&[("a", 1, 1), ("b", 5, 1), ("c", 5, 1), ("d", 1, 0)]);
        let topo = mesh(
            vec![
                DeviceProfile::new("s", 1.0, DeviceKind::Source),
                DeviceProfile::new("x", 2.0, DeviceKind::SpcMember),
                DeviceProfile::new("y", 2.0, DeviceKind::SpcMember),
            ],
            10.0,
            1.0,
        );
        let eg = expand(&g, &topo, 0.5).unwrap();
        assert_eq!(brute_force_partition_capped(&eg, 8), Err(AcoError::TooLarge(9, 8)));
        assert!(brute_force_partition_capped(&eg, 9).is_ok());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = chain(&[("a", 1, 10), ("b", 30, 10), ("c", 30, 10), ("d", 1, 0)]);
        let topo = mesh(
            vec![
                DeviceProfile::new("s", 1.0, DeviceKind::Source),
                DeviceProfile::new("x", 2.0, DeviceKind::SpcMember),
                DeviceProfile::new("y", 3.0, DeviceKind::SpcMember),
            ],
            10.0,
            1.0,
        );
        let eg = expand(&g, &topo, 0.5).unwrap();
        let a = aco_partition(&eg, &AcoParams::with_seed(9)).unwrap();
        let b = aco_partition(&eg, &AcoParams::with_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, aco_partition_sequential(&eg, &AcoParams::with_seed(9)).unwrap());
    }

    #[test]
    fn pheromone_floor_holds() {
        let g = chain(&[("a", 1, 10), ("b", 30, 10), ("c", 1, 0)]);
        let topo = mesh(
            vec![
                DeviceProfile::new("s", 1.0, DeviceKind::Source),
                DeviceProfile::new("x", 5.0, DeviceKind::SpcMember),
            ],
            100.0,
            0.5,
        );
        let eg = expand(&g, &topo, 0.5).unwrap();
        let params = AcoParams {
            n_iterations: 500,
            rho: 0.9,
            ..AcoParams::default()
        };
        let t = aco_pheromones(&eg, &params).unwrap();
        assert!(t.min() >= params.tau_min);
    }

    #[test]
    fn invalid_params() {
        let p = AcoParams { rho: 0.0, ..AcoParams::default() };
        assert!(matches!(p.validate(), Err(AcoError::InvalidParams(_))));
        let p = AcoParams { n_ants: 0, ..AcoParams::default() };
        assert!(p.validate().is_err());
    }

    fn spc3() -> SpcTopology {
        mesh(
            vec![
                DeviceProfile::new("s", 1.0, DeviceKind::Source),
                DeviceProfile::new("x", 8.0, DeviceKind::SpcMember),
                DeviceProfile::new("y", 8.0, DeviceKind::SpcMember).with_load(0.5),
            ],
            1000.0,
            1.0,
        )
    }

    #[test]
    fn decide_next_entry_is_source() {
        let g = chain(&[("a", 1, 10), ("b", 300, 10), ("c", 1, 0)]);
        let d = decide_next(&g, &[], &spc3(), &CostModel::default(), &AcoParams::default()).unwrap();
        assert_eq!(d.device.as_str(), "s");
        assert_eq!(d.stats.operations, 0);
    }

    #[test]
    fn decide_next_never_names_departed_device() {
        let g = chain(&[("a", 1, 10), ("b", 300, 10), ("c", 300, 10), ("d", 1, 0)]);
        let full = spc3();
        let d = decide_next(&g, &[("a".into(), "s".into())], &full, &CostModel::default(), &AcoParams::default())
            .unwrap();
        assert_eq!(d.device.as_str(), "x");
        // x leaves after b ran on it
        let without_x = mesh(
            vec![
                DeviceProfile::new("s", 1.0, DeviceKind::Source),
                DeviceProfile::new("y", 8.0, DeviceKind::SpcMember).with_load(0.5),
            ],
            1000.0,
            1.0,
        );
        let executed = [("a".into(), "s".into()), ("b".into(), "x".into())];
        let d = decide_next(&g, &executed, &without_x, &CostModel::default(), &AcoParams::default()).unwrap();
        assert_ne!(d.device.as_str(), "x");
    }

    #[test]
    fn decide_next_rejects_bad_prefix() {
        let g = chain(&[("a", 1, 10), ("b", 3, 10), ("c", 1, 0)]);
        let p = AcoParams::default();
        let m = CostModel::default();
        assert_eq!(decide_next(&g, &[("b".into(), "s".into())], &spc3(), &m, &p), Err(AcoError::BadPrefix));
        let all = [("a".into(), "s".into()), ("b".into(), "s".into()), ("c".into(), "s".into())];
        assert_eq!(decide_next(&g, &all, &spc3(), &m, &p), Err(AcoError::BadPrefix));
    }

    #[test]
    fn bandwidth_collapse_keeps_next_method_local() {
        let g = chain(&[("a", 1, 50_000), ("b", 300, 50_000), ("c", 1, 0)]);
        let slow = mesh(
            vec![
                DeviceProfile::new("s", 1.0, DeviceKind::Source),
                DeviceProfile::new("x", 8.0, DeviceKind::SpcMember),
            ],
            0.01,
            1.0,
        );
        let m = CostModel::default();
        let d = decide_next(&g, &[("a".into(), "s".into())], &slow, &m, &AcoParams::default()).unwrap();
        let eg = expand_residual(&g, &g.topo_order()[1..], &"s".into(), &slow, &m).unwrap();
        let oracle = brute_force_partition(&eg).unwrap();
        assert_eq!(oracle.assignment.get(&"b".into()).unwrap().as_str(), "s");
        assert_eq!(d.device.as_str(), "s");
    }
}

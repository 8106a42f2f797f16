//! Layered decision graph.
//!
//! Every method in topological order becomes one layer. A pinned method's
//! layer holds the source device only; an offloadable method's layer holds
//! one node per candidate device. Edges run from every node of a layer to
//! every node of the next, so each start-to-end path is one [`Assignment`]
//! and partitioning becomes a shortest-path problem.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::{transfer_time, DeviceId, SpcTopology};
use crate::error::ExpandError;
use crate::graph::{CallGraph, MethodId, MethodNode};

/// Default CPU charge to the source per byte it marshals for a remote call.
pub const DEFAULT_MARSHAL_PER_BYTE: f64 = 1e-4;
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Relative tolerance under which two path scalars count as tied.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Weight of the time objective; `1 - lambda` weighs source CPU.
    pub lambda: f64,
    pub marshal_per_byte: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            lambda: DEFAULT_LAMBDA,
            marshal_per_byte: DEFAULT_MARSHAL_PER_BYTE,
        }
    }
}

impl CostModel {
    pub fn with_lambda(lambda: f64) -> Self {
        CostModel {
            lambda,
            ..Default::default()
        }
    }
}

/// Method → executing device.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub BTreeMap<MethodId, DeviceId>);

impl Assignment {
    pub fn get(&self, m: &MethodId) -> Option<&DeviceId> {
        self.0.get(m)
    }

    pub fn insert(&mut self, m: MethodId, d: DeviceId) {
        self.0.insert(m, d);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MethodId, &DeviceId)> {
        self.0.iter()
    }

    /// Compact `m=d;m=d` rendering in method order.
    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|(m, d)| format!("{m}={d}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeCost {
    /// Milliseconds.
    pub time: f64,
    /// Work units charged to the source device.
    pub cpu: f64,
    pub scalar: f64,
}

/// Per-expansion maxima used to bring time and CPU onto one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub max_time: f64,
    pub max_cpu: f64,
}

impl Normalization {
    pub fn scalarize(&self, lambda: f64, time: f64, cpu: f64) -> f64 {
        let t = if self.max_time > 0.0 { time / self.max_time } else { 0.0 };
        let c = if self.max_cpu > 0.0 { cpu / self.max_cpu } else { 0.0 };
        lambda * t + (1.0 - lambda) * c
    }
}

fn raw_cost(
    method: &MethodNode,
    incoming_bytes: u64,
    prev: &DeviceId,
    exec: &DeviceId,
    topology: &SpcTopology,
    model: &CostModel,
) -> Result<(f64, f64), ExpandError> {
    let device = topology
        .device(exec)
        .ok_or_else(|| ExpandError::MissingLink(prev.clone(), exec.clone()))?;
    let link = topology
        .link(prev, exec)
        .ok_or_else(|| ExpandError::MissingLink(prev.clone(), exec.clone()))?;
    let speed = device.effective_speed();
    if !(speed > 0.0) {
        return Err(ExpandError::ZeroEffectiveSpeed(exec.clone()));
    }
    let time = method.compute_work as f64 / speed + transfer_time(incoming_bytes, &link);
    let cpu = if exec == topology.source() {
        method.compute_work as f64
    } else {
        model.marshal_per_byte * incoming_bytes as f64
    };
    Ok((time, cpu))
}

/// Cost of running `method` on `exec` right after its predecessor ran on
/// `prev`. `incoming_bytes` is what the method receives on this hop.
pub fn edge_cost(
    method: &MethodNode,
    incoming_bytes: u64,
    prev: &DeviceId,
    exec: &DeviceId,
    topology: &SpcTopology,
    model: &CostModel,
    norm: &Normalization,
) -> Result<EdgeCost, ExpandError> {
    let (time, cpu) = raw_cost(method, incoming_bytes, prev, exec, topology, model)?;
    Ok(EdgeCost {
        time,
        cpu,
        scalar: norm.scalarize(model.lambda, time, cpu),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub method: MethodId,
    pub devices: Vec<DeviceId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedGraph {
    layers: Vec<Layer>,
    /// `costs[i][p][c]`: from node `p` of layer `i - 1` (the virtual start
    /// when `i == 0`) to node `c` of layer `i`. Edges into the virtual end
    /// cost nothing and are not stored.
    costs: Vec<Vec<Vec<EdgeCost>>>,
    start_device: DeviceId,
    source: DeviceId,
    model: CostModel,
    norm: Normalization,
}

impl ExpandedGraph {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.devices.len()).collect()
    }

    pub fn start_device(&self) -> &DeviceId {
        &self.start_device
    }

    pub fn source(&self) -> &DeviceId {
        &self.source
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    /// Edge from node `from` of layer `layer - 1` to node `to` of `layer`.
    pub fn cost(&self, layer: usize, from: usize, to: usize) -> &EdgeCost {
        &self.costs[layer][from][to]
    }

    /// Outgoing edges of node `from` of layer `layer - 1`.
    pub fn costs_from(&self, layer: usize, from: usize) -> &[EdgeCost] {
        &self.costs[layer][from]
    }

    pub fn edge_count(&self) -> usize {
        self.costs.iter().map(|l| l.iter().map(Vec::len).sum::<usize>()).sum()
    }

    /// Number of start-to-end paths (saturating).
    pub fn path_count(&self) -> u128 {
        self.layers
            .iter()
            .fold(1u128, |acc, l| acc.saturating_mul(l.devices.len() as u128))
    }

    /// Sum of edge costs along the path picking `choice[i]` in layer `i`.
    pub fn path_cost_indices(&self, choice: &[usize]) -> EdgeCost {
        let mut total = EdgeCost::default();
        let mut prev = 0;
        for (i, &c) in choice.iter().enumerate() {
            let e = &self.costs[i][prev][c];
            total.time += e.time;
            total.cpu += e.cpu;
            total.scalar += e.scalar;
            prev = c;
        }
        total
    }

    pub fn assignment_of(&self, choice: &[usize]) -> Assignment {
        let mut a = Assignment::default();
        for (layer, &c) in self.layers.iter().zip(choice) {
            a.insert(layer.method.clone(), layer.devices[c].clone());
        }
        a
    }

    pub fn indices_of(&self, a: &Assignment) -> Result<Vec<usize>, ExpandError> {
        if a.len() != self.layers.len() {
            return Err(ExpandError::InconsistentAssignment(format!(
                "assignment covers {} methods, graph has {} layers",
                a.len(),
                self.layers.len()
            )));
        }
        self.layers
            .iter()
            .map(|l| {
                let d = a.get(&l.method).ok_or_else(|| {
                    ExpandError::InconsistentAssignment(format!("method `{}` unassigned", l.method))
                })?;
                l.devices.iter().position(|x| x == d).ok_or_else(|| {
                    ExpandError::InconsistentAssignment(format!(
                        "method `{}` cannot run on `{d}`",
                        l.method
                    ))
                })
            })
            .collect()
    }

    pub fn local_count(&self, choice: &[usize]) -> usize {
        self.layers
            .iter()
            .zip(choice)
            .filter(|(l, &c)| l.devices[c] == self.source)
            .count()
    }

    /// Preference order between two paths: lower scalar, then more local
    /// placements, then lexicographically smaller device ids in layer order.
    pub fn compare_paths(&self, a: &[usize], a_scalar: f64, b: &[usize], b_scalar: f64) -> Ordering {
        let scale = a_scalar.abs().max(b_scalar.abs()).max(1.0);
        if (a_scalar - b_scalar).abs() > TIE_EPS * scale {
            return a_scalar.partial_cmp(&b_scalar).unwrap_or(Ordering::Equal);
        }
        let la = self.local_count(a);
        let lb = self.local_count(b);
        lb.cmp(&la).then_with(|| {
            for (l, (&x, &y)) in self.layers.iter().zip(a.iter().zip(b)) {
                match l.devices[x].cmp(&l.devices[y]) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            Ordering::Equal
        })
    }
}

/// Expands the whole graph starting from the source.
pub fn expand(g: &CallGraph, topology: &SpcTopology, lambda: f64) -> Result<ExpandedGraph, ExpandError> {
    expand_with(g, topology, &CostModel::with_lambda(lambda))
}

pub fn expand_with(g: &CallGraph, topology: &SpcTopology, model: &CostModel) -> Result<ExpandedGraph, ExpandError> {
    expand_residual(g, g.topo_order(), topology.source(), topology, model)
}

/// Expands `methods` (a suffix of the topological order) with the virtual
/// start anchored on `anchor`, the device that ran the preceding method.
pub fn expand_residual(
    g: &CallGraph,
    methods: &[MethodId],
    anchor: &DeviceId,
    topology: &SpcTopology,
    model: &CostModel,
) -> Result<ExpandedGraph, ExpandError> {
    if topology.is_empty() {
        return Err(ExpandError::NoCandidates);
    }
    if !(0.0..=1.0).contains(&model.lambda) {
        return Err(ExpandError::InvalidLambda(model.lambda));
    }
    let source = topology.source().clone();
    if !topology.contains(anchor) {
        return Err(ExpandError::MissingLink(anchor.clone(), source));
    }
    let usable: Vec<DeviceId> = topology
        .candidates()
        .into_iter()
        .filter(|d| *d == source || topology.device(d).is_some_and(|p| p.effective_speed() > 0.0))
        .collect();

    let mut layers = Vec::with_capacity(methods.len());
    for m in methods {
        let node = g
            .node(m)
            .ok_or_else(|| ExpandError::InconsistentAssignment(format!("unknown method `{m}`")))?;
        let devices = if node.pinned { vec![source.clone()] } else { usable.clone() };
        layers.push(Layer {
            method: m.clone(),
            devices,
        });
    }

    let mut raw: Vec<Vec<Vec<(f64, f64)>>> = Vec::with_capacity(layers.len());
    let mut prev_devices = vec![anchor.clone()];
    for layer in &layers {
        let node = g.node(&layer.method).unwrap();
        let bytes = g.incoming_bytes(&layer.method);
        let mut block = Vec::with_capacity(prev_devices.len());
        for p in &prev_devices {
            let row = layer
                .devices
                .iter()
                .map(|d| raw_cost(node, bytes, p, d, topology, model))
                .collect::<Result<Vec<_>, _>>()?;
            block.push(row);
        }
        raw.push(block);
        prev_devices = layer.devices.clone();
    }

    let flat = raw.iter().flatten().flatten();
    let norm = Normalization {
        max_time: flat.clone().map(|c| c.0).fold(0.0, f64::max),
        max_cpu: flat.map(|c| c.1).fold(0.0, f64::max),
    };
    let costs = raw
        .into_iter()
        .map(|block| {
            block
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|(time, cpu)| EdgeCost {
                            time,
                            cpu,
                            scalar: norm.scalarize(model.lambda, time, cpu),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(ExpandedGraph {
        layers,
        costs,
        start_device: anchor.clone(),
        source,
        model: *model,
        norm,
    })
}

/// Componentwise cost of the path an assignment selects.
pub fn path_cost(eg: &ExpandedGraph, a: &Assignment) -> Result<EdgeCost, ExpandError> {
    let idx = eg.indices_of(a)?;
    Ok(eg.path_cost_indices(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{DeviceKind, DeviceProfile, Link};
    use crate::graph::{build_graph, MethodNode};

    pub(crate) fn mesh(devices: Vec<DeviceProfile>, bw: f64, lat: f64) -> SpcTopology {
        let ids: Vec<String> = devices.iter().map(|d| d.id.0.clone()).collect();
        let mut links = Vec::new();
        for a in &ids {
            for b in &ids {
                if a != b {
                    links.push(Link::new(a.clone(), b.clone(), bw, lat));
                }
            }
        }
        SpcTopology::new(devices, links).unwrap()
    }

    fn three_method_chain() -> CallGraph {
        build_graph(
            vec![
                MethodNode::new("1", 1).sends("2", 100),
                MethodNode::new("2", 50).sends("3", 100),
                MethodNode::new("3", 1),
            ],
            vec![("1".into(), "2".into()), ("2".into(), "3".into())],
        )
        .unwrap()
    }

    fn three_devices() -> SpcTopology {
        mesh(
            vec![
                DeviceProfile::new("A", 1.0, DeviceKind::Source),
                DeviceProfile::new("B", 4.0, DeviceKind::SpcMember),
                DeviceProfile::new("C", 2.0, DeviceKind::SpcMember),
            ],
            100.0,
            2.0,
        )
    }

    #[test]
    fn chain_layer_sizes() {
        let eg = expand(&three_method_chain(), &three_devices(), 0.5).unwrap();
        assert_eq!(eg.layer_sizes(), vec![1, 3, 1]);
        assert_eq!(eg.path_count(), 3);
        assert_eq!(eg.edge_count(), 1 + 3 + 3);
    }

    #[test]
    fn all_pinned_has_single_path() {
        let mut g = three_method_chain().to_file();
        for n in g.nodes.iter_mut() {
            n.pinned = true;
        }
        let g = g.into_graph().unwrap();
        let eg = expand(&g, &three_devices(), 0.5).unwrap();
        assert_eq!(eg.path_count(), 1);
        let a = eg.assignment_of(&[0, 0, 0]);
        assert!(a.iter().all(|(_, d)| d.as_str() == "A"));
    }

    #[test]
    fn local_hop_by_hand() {
        let topo = mesh(vec![DeviceProfile::new("src", 1.0, DeviceKind::Source)], 1.0, 0.0);
        let m = MethodNode::new("m", 120);
        let norm = Normalization { max_time: 240.0, max_cpu: 120.0 };
        let c = edge_cost(&m, 500, &"src".into(), &"src".into(), &topo, &CostModel::default(), &norm).unwrap();
        assert_eq!(c.time, 120.0);
        assert_eq!(c.cpu, 120.0);
        assert!((c.scalar - (0.5 * 0.5 + 0.5 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_work_same_device_is_free() {
        let topo = three_devices();
        let m = MethodNode::new("m", 0);
        let norm = Normalization { max_time: 1.0, max_cpu: 1.0 };
        let c = edge_cost(&m, 0, &"B".into(), &"B".into(), &topo, &CostModel::default(), &norm).unwrap();
        assert_eq!((c.time, c.cpu, c.scalar), (0.0, 0.0, 0.0));
    }

    #[test]
    fn remote_hop_charges_marshalling_only() {
        let topo = three_devices();
        let m = MethodNode::new("m", 40);
        let norm = Normalization { max_time: 1.0, max_cpu: 1.0 };
        let c = edge_cost(&m, 1000, &"A".into(), &"B".into(), &topo, &CostModel::default(), &norm).unwrap();
        assert!((c.time - (40.0 / 4.0 + 2.0 + 10.0)).abs() < 1e-12);
        assert!((c.cpu - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fully_loaded_device_errors() {
        let topo = mesh(
            vec![
                DeviceProfile::new("src", 1.0, DeviceKind::Source),
                DeviceProfile::new("x", 1.0, DeviceKind::SpcMember).with_load(1.0),
            ],
            1.0,
            0.0,
        );
        let m = MethodNode::new("m", 1);
        let norm = Normalization { max_time: 1.0, max_cpu: 1.0 };
        let err = edge_cost(&m, 0, &"src".into(), &"x".into(), &topo, &CostModel::default(), &norm).unwrap_err();
        assert_eq!(err, ExpandError::ZeroEffectiveSpeed("x".into()));
        // expansion just leaves the saturated device out
        let eg = expand(&three_method_chain(), &topo, 0.5).unwrap();
        assert_eq!(eg.layer_sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn all_local_path_has_no_transfer() {
        let g = three_method_chain();
        let eg = expand(&g, &three_devices(), 0.5).unwrap();
        let cost = eg.path_cost_indices(&[0, 0, 0]);
        assert_eq!(cost.time, 52.0);
        assert_eq!(cost.cpu, 52.0);
    }

    #[test]
    fn inconsistent_assignment_rejected() {
        let eg = expand(&three_method_chain(), &three_devices(), 0.5).unwrap();
        let mut a = eg.assignment_of(&[0, 1, 0]);
        a.insert("3".into(), "B".into());
        assert!(matches!(path_cost(&eg, &a), Err(ExpandError::InconsistentAssignment(_))));
        a.0.remove(&MethodId::from("3"));
        assert!(matches!(path_cost(&eg, &a), Err(ExpandError::InconsistentAssignment(_))));
    }

    #[test]
    fn single_node_graph_costs_one_hop() {
        let g = build_graph(vec![MethodNode::new("only", 7)], vec![]).unwrap();
        let eg = expand(&g, &three_devices(), 0.5).unwrap();
        assert_eq!(eg.layer_sizes(), vec![1]);
        assert_eq!(eg.path_cost_indices(&[0]).time, 7.0);
    }

    #[test]
    fn lambda_out_of_range() {
        assert_eq!(
            expand(&three_method_chain(), &three_devices(), 1.5).unwrap_err(),
            ExpandError::InvalidLambda(1.5)
        );
    }

    #[test]
    fn ties_prefer_local_then_lexicographic() {
        let eg = expand(&three_method_chain(), &three_devices(), 0.5).unwrap();
        assert_eq!(eg.compare_paths(&[0, 0, 0], 1.0, &[0, 1, 0], 1.0), Ordering::Less);
        assert_eq!(eg.compare_paths(&[0, 1, 0], 1.0, &[0, 2, 0], 1.0), Ordering::Less);
        assert_eq!(eg.compare_paths(&[0, 2, 0], 0.5, &[0, 0, 0], 1.0), Ordering::Less);
    }
}

//! Application call graphs.
//!
//! A [`CallGraph`] is a DAG of [`MethodNode`]s with a single entry and a
//! single exit. Edges are invocation dependencies; each node carries the
//! bytes it hands to each successor.

mod presets;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

pub use presets::{benchmark, Benchmark, PRESET_TABLE};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodId(pub String);

impl MethodId {
    pub fn new(id: impl Into<String>) -> Self {
        MethodId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MethodId {
    fn from(s: &str) -> Self {
        MethodId(s.to_string())
    }
}

/// One method of the application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodNode {
    pub id: MethodId,
    /// Work units; converted to time only through a device's speed.
    pub compute_work: u64,
    #[serde(default)]
    pub pinned: bool,
    /// Bytes produced for each successor.
    #[serde(default)]
    pub out_data: BTreeMap<MethodId, u64>,
}

impl MethodNode {
    pub fn new(id: impl Into<String>, compute_work: u64) -> Self {
        MethodNode {
            id: MethodId::new(id),
            compute_work,
            pinned: false,
            out_data: BTreeMap::new(),
        }
    }

    pub fn pinned(mut self) -> Self {
        self.pinned = true;
        self
    }

    pub fn sends(mut self, to: impl Into<String>, bytes: u64) -> Self {
        self.out_data.insert(MethodId::new(to), bytes);
        self
    }
}

/// A validated call graph. Construct with [`build_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct CallGraph {
    nodes: Vec<MethodNode>,
    index: BTreeMap<MethodId, usize>,
    edges: BTreeSet<(MethodId, MethodId)>,
    preds: BTreeMap<MethodId, Vec<MethodId>>,
    entry: MethodId,
    exit: MethodId,
    order: Vec<MethodId>,
}

impl CallGraph {
    pub fn nodes(&self) -> &[MethodNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(MethodId, MethodId)> {
        &self.edges
    }

    pub fn entry(&self) -> &MethodId {
        &self.entry
    }

    pub fn exit(&self) -> &MethodId {
        &self.exit
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &MethodId) -> Option<&MethodNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn predecessors(&self, id: &MethodId) -> &[MethodId] {
        self.preds.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Bytes flowing into `id` from all of its callers.
    ///
    /// Execution is linearized along the topological order, so these bytes
    /// travel with control from the previously executed method.
    pub fn incoming_bytes(&self, id: &MethodId) -> u64 {
        self.predecessors(id)
            .iter()
            .filter_map(|p| self.node(p).and_then(|n| n.out_data.get(id)))
            .sum()
    }

    pub fn total_work(&self) -> u64 {
        self.nodes.iter().map(|n| n.compute_work).sum()
    }

    /// Deterministic topological order (lexicographic tie-break).
    pub fn topo_order(&self) -> &[MethodId] {
        &self.order
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().cloned().collect(),
            entry: self.entry.clone(),
            exit: self.exit.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        file.into_graph()
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// On-disk graph document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<MethodNode>,
    pub edges: Vec<(MethodId, MethodId)>,
    pub entry: MethodId,
    pub exit: MethodId,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<CallGraph, GraphError> {
        let g = build_graph(self.nodes, self.edges)?;
        if g.entry != self.entry || g.exit != self.exit {
            return Err(GraphError::NoEntryOrExit(format!(
                "declared entry/exit ({}, {}) differ from the graph's ({}, {})",
                self.entry, self.exit, g.entry, g.exit
            )));
        }
        Ok(g)
    }
}

/// Validates nodes and edges into a [`CallGraph`].
///
/// Entry and exit are forced to be pinned. `out_data` keys must be
/// successors along an edge; edges without an `out_data` entry carry 0 bytes.
pub fn build_graph(
    nodes: Vec<MethodNode>,
    edges: impl IntoIterator<Item = (MethodId, MethodId)>,
) -> Result<CallGraph, GraphError> {
    let mut index = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id.clone(), i).is_some() {
            return Err(GraphError::DuplicateId(n.id.clone()));
        }
    }
    if nodes.is_empty() {
        return Err(GraphError::NoEntryOrExit("graph has no methods".into()));
    }

    let edges: BTreeSet<(MethodId, MethodId)> = edges.into_iter().collect();
    let mut succs: BTreeMap<&MethodId, Vec<&MethodId>> = BTreeMap::new();
    let mut indeg: BTreeMap<&MethodId, usize> = nodes.iter().map(|n| (&n.id, 0)).collect();
    for (a, b) in &edges {
        if !index.contains_key(a) || !index.contains_key(b) {
            return Err(GraphError::DanglingEdge(a.clone(), b.clone()));
        }
        succs.entry(a).or_default().push(b);
        *indeg.get_mut(b).unwrap() += 1;
    }
    for n in &nodes {
        for to in n.out_data.keys() {
            if !edges.contains(&(n.id.clone(), to.clone())) {
                return Err(GraphError::InvalidNode(
                    n.id.clone(),
                    format!("out_data names `{to}` which is not a successor"),
                ));
            }
        }
    }

    // Kahn's algorithm with a sorted ready set gives the lexicographic order.
    let sources: Vec<&MethodId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
    let mut remaining = indeg.clone();
    let mut ready: BTreeSet<&MethodId> = sources.iter().copied().collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(next);
        order.push(next.clone());
        for &s in succs.get(next).map(Vec::as_slice).unwrap_or(&[]) {
            let d = remaining.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = remaining
            .iter()
            .find(|(_, &d)| d > 0)
            .map(|(k, _)| (*k).clone())
            .unwrap();
        return Err(GraphError::CycleDetected(stuck));
    }

    let sinks: Vec<&MethodId> = nodes
        .iter()
        .map(|n| &n.id)
        .filter(|id| succs.get(id).is_none_or(|s| s.is_empty()))
        .collect();
    if sources.len() != 1 || sinks.len() != 1 {
        return Err(GraphError::NoEntryOrExit(format!(
            "expected one entry and one exit, found {} entries and {} exits",
            sources.len(),
            sinks.len()
        )));
    }
    let entry = sources[0].clone();
    let exit = sinks[0].clone();

    let mut preds: BTreeMap<MethodId, Vec<MethodId>> = BTreeMap::new();
    for (a, b) in &edges {
        preds.entry(b.clone()).or_default().push(a.clone());
    }

    let mut nodes = nodes;
    for n in nodes.iter_mut() {
        if n.id == entry || n.id == exit {
            n.pinned = true;
        }
    }

    Ok(CallGraph {
        nodes,
        index,
        edges,
        preds,
        entry,
        exit,
        order,
    })
}

/// Free-function form of [`CallGraph::topo_order`].
pub fn topo_order(g: &CallGraph) -> Vec<MethodId> {
    g.topo_order().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<MethodId> {
        v.iter().map(|s| MethodId::from(*s)).collect()
    }

    fn e(a: &str, b: &str) -> (MethodId, MethodId) {
        (a.into(), b.into())
    }

    #[test]
    fn chain_of_three() {
        let g = build_graph(
            vec![MethodNode::new("1", 1), MethodNode::new("2", 5), MethodNode::new("3", 1)],
            vec![e("1", "2"), e("2", "3")],
        )
        .unwrap();
        assert_eq!(g.entry().as_str(), "1");
        assert_eq!(g.exit().as_str(), "3");
        assert_eq!(topo_order(&g), ids(&["1", "2", "3"]));
        assert!(g.node(&"1".into()).unwrap().pinned);
        assert!(g.node(&"3".into()).unwrap().pinned);
        assert!(!g.node(&"2".into()).unwrap().pinned);
    }

    #[test]
    fn single_node_graph() {
        let g = build_graph(vec![MethodNode::new("only", 3).pinned()], vec![]).unwrap();
        assert_eq!(g.entry(), g.exit());
        assert_eq!(topo_order(&g), ids(&["only"]));
    }

    #[test]
    fn two_cycle_rejected() {
        let err = build_graph(
            vec![MethodNode::new("a", 1), MethodNode::new("b", 1)],
            vec![e("a", "b"), e("b", "a")],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::CycleDetected(_)));
    }

    #[test]
    fn dangling_edge_rejected() {
        let err = build_graph(vec![MethodNode::new("a", 1)], vec![e("a", "zz")]).unwrap_err();
        assert_eq!(err, GraphError::DanglingEdge("a".into(), "zz".into()));
    }

    #[test]
    fn isolated_node_rejected() {
        let err = build_graph(
            vec![MethodNode::new("a", 1), MethodNode::new("b", 1), MethodNode::new("c", 1)],
            vec![e("a", "b")],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::NoEntryOrExit(_)));
    }

    #[test]
    fn diamond_breaks_ties_lexicographically() {
        let g = build_graph(
            vec![
                MethodNode::new("d", 1),
                MethodNode::new("c", 1),
                MethodNode::new("b", 1),
                MethodNode::new("a", 1),
            ],
            vec![e("a", "c"), e("a", "b"), e("b", "d"), e("c", "d")],
        )
        .unwrap();
        assert_eq!(topo_order(&g), ids(&["a", "b", "c", "d"]));
    }

    #[test]
    fn out_data_must_follow_edges() {
        let err = build_graph(
            vec![MethodNode::new("a", 1).sends("c", 10), MethodNode::new("b", 1), MethodNode::new("c", 1)],
            vec![e("a", "b"), e("b", "c")],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::InvalidNode(..)));
    }

    #[test]
    fn incoming_bytes_sums_callers() {
        let g = build_graph(
            vec![
                MethodNode::new("a", 1).sends("b", 10).sends("c", 20),
                MethodNode::new("b", 1).sends("d", 5),
                MethodNode::new("c", 1).sends("d", 7),
                MethodNode::new("d", 1),
            ],
            vec![e("a", "b"), e("a", "c"), e("b", "d"), e("c", "d")],
        )
        .unwrap();
        assert_eq!(g.incoming_bytes(&"d".into()), 12);
        assert_eq!(g.incoming_bytes(&"a".into()), 0);
    }

    #[test]
    fn json_declared_entry_must_match() {
        let text = r#"{"nodes":[{"id":"a","compute_work":1},{"id":"b","compute_work":1}],
                       "edges":[["a","b"]],"entry":"b","exit":"a"}"#;
        assert!(matches!(CallGraph::from_json(text), Err(GraphError::NoEntryOrExit(_))));
    }
}

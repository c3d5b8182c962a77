//! Partition solver: Dijkstra over the partitioning graph, decision
//! extraction, and an exhaustive reference solver.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{build_partition_graph, PartitionGraph, Vertex, VertexId, DEFAULT_EPSILON_S};
use crate::model::BranchyModel;
use crate::timing::{expected_inference_time, NetworkProfile, TimingProfile};

/// Where the chain is split between edge and cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CutPoint {
    CloudOnly,
    /// Layers `1..=s` on the edge, the rest in the cloud.
    AtLayer(usize),
    EdgeOnly,
}

impl CutPoint {
    pub fn from_index(cut: usize, num_layers: usize) -> Self {
        match cut {
            0 => CutPoint::CloudOnly,
            s if s >= num_layers => CutPoint::EdgeOnly,
            s => CutPoint::AtLayer(s),
        }
    }

    /// Number of layers processed on the edge.
    pub fn index(self, num_layers: usize) -> usize {
        match self {
            CutPoint::CloudOnly => 0,
            CutPoint::AtLayer(s) => s,
            CutPoint::EdgeOnly => num_layers,
        }
    }
}

impl fmt::Display for CutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutPoint::CloudOnly => f.write_str("cloud_only"),
            CutPoint::AtLayer(s) => write!(f, "layer:{s}"),
            CutPoint::EdgeOnly => f.write_str("edge_only"),
        }
    }
}

impl Serialize for CutPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A member of the edge-side vertex set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMember {
    Layer(usize),
    Branch(usize),
}

impl fmt::Display for EdgeMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeMember::Layer(i) => write!(f, "v{i}"),
            EdgeMember::Branch(k) => write!(f, "b{k}"),
        }
    }
}

impl Serialize for EdgeMember {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionDecision {
    pub cut: CutPoint,
    pub cut_index: usize,
    /// Layers and branches run on the edge, in execution order.
    pub edge_set: Vec<EdgeMember>,
    /// Layers run in the cloud.
    #[serde(serialize_with = "serialize_cloud_set")]
    pub cloud_set: Vec<usize>,
    pub expected_time_s: f64,
    #[serde(serialize_with = "serialize_path")]
    pub path: Vec<Vertex>,
}

fn serialize_cloud_set<S: Serializer>(set: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(set.iter().map(|i| format!("v{i}")))
}

fn serialize_path<S: Serializer>(path: &[Vertex], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(path.iter().map(ToString::to_string))
}

impl PartitionDecision {
    fn for_cut(model: &BranchyModel, cut: usize, expected_time_s: f64, path: Vec<Vertex>) -> Self {
        let n = model.num_layers();
        let mut edge_set = Vec::new();
        for i in 1..=cut {
            edge_set.push(EdgeMember::Layer(i));
            if i < cut && model.branch_after(i).is_some() {
                edge_set.push(EdgeMember::Branch(i));
            }
        }
        Self {
            cut: CutPoint::from_index(cut, n),
            cut_index: cut,
            edge_set,
            cloud_set: (cut + 1..=n).collect(),
            expected_time_s,
            path,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("decisions always serialize");
        s.push('\n');
        s
    }
}

/// Vertex sequence of the unique Input→Output path through `cut`.
pub fn canonical_path(model: &BranchyModel, cut: usize) -> Vec<Vertex> {
    let n = model.num_layers();
    let mut path = vec![Vertex::Input];
    for i in 1..=cut {
        path.push(Vertex::EdgeLayer(i));
        path.push(Vertex::EdgeAux(i));
        if i < cut && model.branch_after(i).is_some() {
            path.push(Vertex::EdgeBranch(i));
        }
    }
    if cut < n {
        path.extend((cut + 1..=n).map(Vertex::CloudLayer));
        path.push(Vertex::CloudTerminal);
    }
    path.push(Vertex::Output);
    path
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPath {
    pub cost: f64,
    pub path: Vec<VertexId>,
}

/// Cut rank contributed by a link: every Input→Output path crosses exactly
/// one ranked link, so summing ranks along a path yields its cut index.
fn link_rank(graph: &PartitionGraph, from: VertexId, to: VertexId) -> usize {
    match (graph.vertex(from), graph.vertex(to)) {
        (Vertex::Input, Vertex::CloudLayer(_)) => 0,
        (Vertex::EdgeAux(i), Vertex::CloudLayer(_)) => i,
        (Vertex::CloudTerminal, Vertex::Output) => 0,
        (_, Vertex::Output) => graph.num_layers(),
        _ => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Label {
    cost: f64,
    rank: usize,
}

impl Label {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.rank.cmp(&other.rank))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    label: Label,
    vertex: VertexId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap
        other
            .label
            .cmp_key(&self.label)
            .then(other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost Input→Output path. Exact cost ties go to the path with the
/// smaller cut index.
pub fn shortest_path(graph: &PartitionGraph) -> Result<ShortestPath> {
    let n = graph.vertices().len();
    if let Some(bad) = graph.links().iter().find(|l| !(l.weight_s >= 0.0)) {
        return Err(Error::Graph(format!(
            "negative or NaN weight {} on link {} -> {}",
            bad.weight_s,
            graph.vertex(bad.from),
            graph.vertex(bad.to)
        )));
    }
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut pred: Vec<Option<VertexId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();

    let start = Label { cost: 0.0, rank: 0 };
    best[graph.input()] = Some(start);
    heap.push(Entry {
        label: start,
        vertex: graph.input(),
    });

    while let Some(Entry { label, vertex }) = heap.pop() {
        if done[vertex] {
            continue;
        }
        done[vertex] = true;
        if vertex == graph.output() {
            break;
        }
        for link in graph.outgoing(vertex) {
            let next = Label {
                cost: label.cost + link.weight_s,
                rank: label.rank + link_rank(graph, link.from, link.to),
            };
            let improves = match best[link.to] {
                None => true,
                Some(cur) => next.cmp_key(&cur) == Ordering::Less,
            };
            if improves && !done[link.to] {
                best[link.to] = Some(next);
                pred[link.to] = Some(vertex);
                heap.push(Entry {
                    label: next,
                    vertex: link.to,
                });
            }
        }
    }

    let out = graph.output();
    let cost = best[out]
        .ok_or_else(|| Error::Graph("output is unreachable from input".into()))?
        .cost;
    let mut path = vec![out];
    let mut cur = out;
    while let Some(p) = pred[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    if path[0] != graph.input() {
        return Err(Error::Graph("broken predecessor chain".into()));
    }
    Ok(ShortestPath { cost, path })
}

/// Reads the partition off an Input→Output path of `graph`.
pub fn extract_decision(
    graph: &PartitionGraph,
    model: &BranchyModel,
    path: &[VertexId],
    cost: f64,
) -> Result<PartitionDecision> {
    if path.first() != Some(&graph.input()) || path.last() != Some(&graph.output()) {
        return Err(Error::Graph("path must run from input to output".into()));
    }
    for w in path.windows(2) {
        if graph.link_between(w[0], w[1]).is_none() {
            return Err(Error::Graph(format!(
                "path uses missing link {} -> {}",
                graph.vertex(w[0]),
                graph.vertex(w[1])
            )));
        }
    }
    let vertices: Vec<Vertex> = path.iter().map(|&v| graph.vertex(v)).collect();
    let cut = vertices
        .windows(2)
        .find_map(|w| match (w[0], w[1]) {
            (Vertex::Input, Vertex::CloudLayer(_)) => Some(0),
            (Vertex::EdgeAux(s), Vertex::CloudLayer(_)) => Some(s),
            _ => None,
        })
        .unwrap_or(graph.num_layers());
    let uses_terminal = vertices.contains(&Vertex::CloudTerminal);
    let expected = if uses_terminal {
        cost - graph.epsilon_s()
    } else {
        cost
    };
    Ok(PartitionDecision::for_cut(model, cut, expected, vertices))
}

/// Evaluates every cut analytically and returns the cheapest, preferring the
/// smaller cut on exact ties.
pub fn brute_force_partition(
    model: &BranchyModel,
    profile: &TimingProfile,
    net: &NetworkProfile,
) -> Result<PartitionDecision> {
    model.validate().map_err(Error::Validation)?;
    let mut best: Option<(usize, f64)> = None;
    for cut in 0..=model.num_layers() {
        let t = expected_inference_time(model, profile, net, cut)?;
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((cut, t));
        }
    }
    let (cut, t) = best.expect("at least one cut exists");
    Ok(PartitionDecision::for_cut(
        model,
        cut,
        t,
        canonical_path(model, cut),
    ))
}

/// Optimal partition via the shortest path. The reported expected time is
/// the analytic value for the chosen cut, which equals the path cost minus
/// the epsilon contribution up to rounding.
pub fn solve(
    model: &BranchyModel,
    profile: &TimingProfile,
    net: &NetworkProfile,
) -> Result<PartitionDecision> {
    solve_with_epsilon(model, profile, net, DEFAULT_EPSILON_S)
}

pub fn solve_with_epsilon(
    model: &BranchyModel,
    profile: &TimingProfile,
    net: &NetworkProfile,
    epsilon_s: f64,
) -> Result<PartitionDecision> {
    let graph = build_partition_graph(model, profile, net, epsilon_s)?;
    let sp = shortest_path(&graph)?;
    let mut decision = extract_decision(&graph, model, &sp.path, sp.cost)?;
    // Path sums accumulate in a different order than the analytic formula;
    // report the analytic value so equal cuts always print equal times.
    let analytic = expected_inference_time(model, profile, net, decision.cut_index)?;
    if (analytic - decision.expected_time_s).abs() > 1e-9 * analytic.max(epsilon_s) {
        return Err(Error::Graph(format!(
            "path cost {} disagrees with expected time {analytic} of cut {}",
            decision.expected_time_s, decision.cut
        )));
    }
    decision.expected_time_s = analytic;
    Ok(decision)
}

//! Shortest-path instance for the partitioning problem.
//!
//! The graph holds two chains. The edge chain runs
//! `input -> v1e -> v1*e [-> b1] -> v2e -> ... -> vn*e -> output`, where
//! every layer vertex is followed by an auxiliary cut vertex and side branches
//! sit between an auxiliary vertex and the next layer. The cloud chain runs
//! `input -> v1c -> ... -> vnc -> vn*c -> output`. Transfer links
//! `vs*e -> v(s+1)c` connect the two. The only link into `output` from the
//! cloud side carries a small `epsilon`, so that when early exits make the
//! cloud tail free the edge-only path still wins the tie.
//!
//! Every Input→Output path crosses exactly one transfer link (or the edge-only
//! terminal link), and its cost is the expected inference time of that cut.
//! Edge-chain links are charged with the survival probability of the
//! branches already passed. Cloud-chain links are shared by every cut, so
//! their weights are arranged so that the tail from `v(s+1)c` to the output
//! equals `survival(s) * sum(t_c[s+1..])` for every entry point `s`:
//!
//! ```text
//! w(vjc -> next) = survival(j-1) * t_c[j] + survival(j-1) * p[j-1] * sum(t_c[j+1..])
//! ```
//!
//! where `p[j-1]` is the exit probability of the branch after layer `j-1`
//! (zero if there is none). With no branches this is exactly `t_c[j]`.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BranchyModel;
use crate::timing::{comm_time, transfer_bytes, NetworkProfile, TimingProfile};

/// Default weight of the terminal cloud link, in seconds.
pub const DEFAULT_EPSILON_S: f64 = 1e-9;

pub type VertexId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Vertex {
    Input,
    Output,
    /// Main-branch layer `i` processed on the edge.
    EdgeLayer(usize),
    /// Side branch following layer `k`, processed on the edge.
    EdgeBranch(usize),
    /// Cut point after edge layer `i`.
    EdgeAux(usize),
    /// Main-branch layer `i` processed in the cloud.
    CloudLayer(usize),
    /// Virtual vertex between the last cloud layer and the output.
    CloudTerminal,
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Input => f.write_str("input"),
            Vertex::Output => f.write_str("output"),
            Vertex::EdgeLayer(i) => write!(f, "v{i}e"),
            Vertex::EdgeBranch(k) => write!(f, "b{k}"),
            Vertex::EdgeAux(i) => write!(f, "v{i}*e"),
            Vertex::CloudLayer(i) => write!(f, "v{i}c"),
            Vertex::CloudTerminal => f.write_str("terminal*c"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightClass {
    EdgeProc,
    CloudProc,
    Transfer,
    Epsilon,
    Zero,
}

impl fmt::Display for WeightClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightClass::EdgeProc => "edge_proc",
            WeightClass::CloudProc => "cloud_proc",
            WeightClass::Transfer => "transfer",
            WeightClass::Epsilon => "epsilon",
            WeightClass::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedLink {
    pub from: VertexId,
    pub to: VertexId,
    pub weight_s: f64,
    pub weight_class: WeightClass,
}

#[derive(Debug, Clone)]
pub struct PartitionGraph {
    vertices: Vec<Vertex>,
    links: Vec<WeightedLink>,
    outgoing: Vec<Vec<usize>>,
    num_layers: usize,
    epsilon_s: f64,
    model_ref: String,
}

impl PartitionGraph {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn links(&self) -> &[WeightedLink] {
        &self.links
    }

    pub fn vertex(&self, id: VertexId) -> Vertex {
        self.vertices[id]
    }

    /// Links leaving `id`.
    pub fn outgoing(&self, id: VertexId) -> impl Iterator<Item = &WeightedLink> {
        self.outgoing[id].iter().map(move |&l| &self.links[l])
    }

    pub fn link_between(&self, from: VertexId, to: VertexId) -> Option<&WeightedLink> {
        self.outgoing(from).find(|l| l.to == to)
    }

    pub fn id_of(&self, vertex: Vertex) -> Option<VertexId> {
        self.vertices.iter().position(|&v| v == vertex)
    }

    pub fn input(&self) -> VertexId {
        INPUT
    }

    pub fn output(&self) -> VertexId {
        OUTPUT
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn epsilon_s(&self) -> f64 {
        self.epsilon_s
    }

    pub fn model_ref(&self) -> &str {
        &self.model_ref
    }

    pub fn set_model_ref(&mut self, model_ref: impl Into<String>) {
        self.model_ref = model_ref.into();
    }

    /// Graphviz rendering: one node per vertex labelled with its kind, one
    /// edge per link labelled with weight class and weight in seconds.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph partition {{");
        let _ = writeln!(out, "  rankdir=LR;");
        if !self.model_ref.is_empty() {
            let _ = writeln!(out, "  label=\"{}\";", self.model_ref.replace('"', "\\\""));
        }
        for (id, v) in self.vertices.iter().enumerate() {
            let color = match v {
                Vertex::Input | Vertex::Output => "white",
                Vertex::EdgeLayer(_) | Vertex::EdgeBranch(_) => "gray",
                Vertex::EdgeAux(_) => "orange",
                Vertex::CloudLayer(_) | Vertex::CloudTerminal => "lightblue",
            };
            let _ = writeln!(
                out,
                "  n{id} [label=\"{v}\", style=filled, fillcolor={color}];"
            );
        }
        for l in &self.links {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{} {:e}\"];",
                l.from, l.to, l.weight_class, l.weight_s
            );
        }
        out.push_str("}\n");
        out
    }
}

const INPUT: VertexId = 0;
const OUTPUT: VertexId = 1;
const CLOUD_TERMINAL: VertexId = 2;

struct Builder {
    vertices: Vec<Vertex>,
    links: Vec<WeightedLink>,
}

impl Builder {
    fn vertex(&mut self, v: Vertex) -> VertexId {
        self.vertices.push(v);
        self.vertices.len() - 1
    }

    fn link(&mut self, from: VertexId, to: VertexId, weight_s: f64, weight_class: WeightClass) {
        self.links.push(WeightedLink {
            from,
            to,
            weight_s,
            weight_class,
        });
    }
}

/// Builds the weighted partitioning graph for `model` under the given
/// profiles.
pub fn build_partition_graph(
    model: &BranchyModel,
    profile: &TimingProfile,
    net: &NetworkProfile,
    epsilon_s: f64,
) -> Result<PartitionGraph> {
    model.validate().map_err(Error::Validation)?;
    profile.check_against(model)?;
    if !(epsilon_s.is_finite() && epsilon_s > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon_s}"
        )));
    }
    let n = model.num_layers();

    // survival[i]: probability that a sample reaches edge layer i (1-based),
    // i.e. the product of 1 - p over branches after layers 1..i-1.
    let mut survival = vec![1.0; n + 1];
    for i in 1..n {
        survival[i + 1] = match model.branch_after(i) {
            Some(b) => survival[i] * (1.0 - model.branches[b].exit_probability),
            None => survival[i],
        };
    }
    // cloud_tail[j] = sum of cloud times of layers j+1..n
    let mut cloud_tail = vec![0.0; n + 1];
    for j in (0..n).rev() {
        cloud_tail[j] = profile.cloud_times[j] + cloud_tail[j + 1];
    }

    let mut b = Builder {
        vertices: Vec::with_capacity(4 * n + model.num_branches() + 3),
        links: Vec::with_capacity(5 * n + 2 * model.num_branches() + 3),
    };
    b.vertex(Vertex::Input);
    b.vertex(Vertex::Output);
    b.vertex(Vertex::CloudTerminal);

    let cloud: Vec<VertexId> = (1..=n).map(|i| b.vertex(Vertex::CloudLayer(i))).collect();

    // cloud chain
    b.link(
        INPUT,
        cloud[0],
        comm_time(model.input_bytes, net),
        WeightClass::Transfer,
    );
    for j in 1..=n {
        // survival of a sample that entered the cloud at or before layer j
        let entry = survival[j - 1];
        let exit_before = (j > 1)
            .then(|| model.branch_after(j - 1))
            .flatten()
            .map_or(0.0, |bi| model.branches[bi].exit_probability);
        let mut weight = entry * profile.cloud_times[j - 1];
        if exit_before > 0.0 {
            weight += entry * exit_before * cloud_tail[j];
        }
        let next = if j < n { cloud[j] } else { CLOUD_TERMINAL };
        b.link(cloud[j - 1], next, weight, WeightClass::CloudProc);
    }
    b.link(CLOUD_TERMINAL, OUTPUT, epsilon_s, WeightClass::Epsilon);

    // edge chain
    let mut prev = INPUT;
    let mut prev_weight = (0.0, WeightClass::Zero);
    for i in 1..=n {
        let layer = b.vertex(Vertex::EdgeLayer(i));
        b.link(prev, layer, prev_weight.0, prev_weight.1);
        let aux = b.vertex(Vertex::EdgeAux(i));
        b.link(
            layer,
            aux,
            survival[i] * profile.edge_times[i - 1],
            WeightClass::EdgeProc,
        );
        if i < n {
            b.link(
                aux,
                cloud[i],
                survival[i] * comm_time(transfer_bytes(model, i), net),
                WeightClass::Transfer,
            );
        }
        prev = aux;
        prev_weight = (0.0, WeightClass::Zero);
        if let Some(bi) = model.branch_after(i) {
            let branch = b.vertex(Vertex::EdgeBranch(i));
            b.link(aux, branch, 0.0, WeightClass::Zero);
            prev = branch;
            prev_weight = (
                survival[i] * profile.branch_edge_times[bi],
                WeightClass::EdgeProc,
            );
        }
    }
    b.link(prev, OUTPUT, prev_weight.0, prev_weight.1);

    let mut outgoing = vec![Vec::new(); b.vertices.len()];
    for (idx, l) in b.links.iter().enumerate() {
        outgoing[l.from].push(idx);
    }
    Ok(PartitionGraph {
        vertices: b.vertices,
        links: b.links,
        outgoing,
        num_layers: n,
        epsilon_s,
        model_ref: String::new(),
    })
}

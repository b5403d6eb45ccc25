//! The tensor network multigraph.
//!
//! Nodes hold dense factors; bonds are summed indices shared by exactly two
//! nodes. Every node of a finished network owns one physical (open) mode. The
//! modes of each node tensor are kept in canonical order: incident bond labels
//! sorted lexicographically, then the physical mode(s).

mod io;
pub mod rng;
mod shape;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::DenseTensor;

pub use io::{deserialize, serialize, FORMAT_VERSION};
pub use shape::GridLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub u32);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bond {
    pub id: EdgeId,
    pub a: NodeId,
    pub b: NodeId,
    pub rank: usize,
    pub label: String,
}

impl Bond {
    pub fn touches(&self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }

    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if self.a == node {
            Some(self.b)
        } else if self.b == node {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn joins(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalMode {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// Ring of `d` nodes.
    Chain { d: usize },
    /// String (path) of `d` nodes.
    Train { d: usize },
    /// `rows × cols` lattice.
    Grid { rows: usize, cols: usize },
    General,
}

impl Topology {
    pub fn node_count(&self) -> Option<usize> {
        match *self {
            Topology::Chain { d } | Topology::Train { d } => Some(d),
            Topology::Grid { rows, cols } => Some(rows * cols),
            Topology::General => None,
        }
    }

    pub fn bond_count(&self) -> Option<usize> {
        match *self {
            Topology::Chain { d } => Some(d),
            Topology::Train { d } => Some(d.saturating_sub(1)),
            Topology::Grid { rows, cols } => Some(2 * rows * cols - rows - cols),
            Topology::General => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Chain { d } => write!(f, "Chain({d})"),
            Topology::Train { d } => write!(f, "Train({d})"),
            Topology::Grid { rows, cols } => write!(f, "Grid({rows},{cols})"),
            Topology::General => write!(f, "General"),
        }
    }
}

/// How [`build`] fills the factor tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    Zeros,
    /// I.i.d. uniform entries in `[−1, 1)` from [`rng::UniformSource`],
    /// drawn node by node in id order, each tensor in storage order.
    SeededRandom(u64),
}

/// One broken invariant found by [`TensorNetwork::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Empty,
    ZeroRank { bond: String },
    SelfLoop { bond: String },
    UnknownEndpoint { bond: String, node: NodeId },
    DuplicateLabel { label: String },
    PhysicalModeCount { node: NodeId, count: usize },
    MissingMode { node: NodeId, label: String },
    ExtentMismatch { node: NodeId, label: String, expected: usize, actual: usize },
    UnexpectedMode { node: NodeId, label: String },
    MissingTensor { node: NodeId },
    Disconnected { components: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "network has no nodes"),
            Violation::ZeroRank { bond } => write!(f, "bond {bond} has rank 0"),
            Violation::SelfLoop { bond } => write!(f, "bond {bond} is a self-loop"),
            Violation::UnknownEndpoint { bond, node } => write!(f, "bond {bond} references unknown node {node}"),
            Violation::DuplicateLabel { label } => write!(f, "label {label} is used more than once"),
            Violation::PhysicalModeCount { node, count } => {
                write!(f, "node {node} has {count} physical modes, expected 1")
            }
            Violation::MissingMode { node, label } => write!(f, "node {node} tensor lacks mode {label}"),
            Violation::ExtentMismatch { node, label, expected, actual } => write!(
                f,
                "node {node}, mode {label}: expected extent {expected}, tensor has {actual}"
            ),
            Violation::UnexpectedMode { node, label } => {
                write!(f, "node {node} tensor has mode {label} with no matching bond or physical index")
            }
            Violation::MissingTensor { node } => write!(f, "node {node} has no tensor"),
            Violation::Disconnected { components } => {
                write!(f, "bond graph is disconnected ({components} components)")
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TensorNetwork {
    nodes: BTreeMap<NodeId, DenseTensor>,
    bonds: BTreeMap<EdgeId, Bond>,
    physical: BTreeMap<NodeId, Vec<PhysicalMode>>,
}

impl PartialEq for TensorNetwork {
    fn eq(&self, other: &Self) -> bool {
        let key = |n: &TensorNetwork| {
            let mut v: Vec<(String, NodeId, NodeId, usize)> =
                n.bonds.values().map(|b| (b.label.clone(), b.a, b.b, b.rank)).collect();
            v.sort();
            v
        };
        self.nodes == other.nodes && self.physical == other.physical && key(self) == key(other)
    }
}

impl TensorNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node. The tensor is stored as given; call
    /// [`canonicalize`](Self::canonicalize) or [`validate`](Self::validate)
    /// once the incident bonds exist.
    pub fn add_node(&mut self, id: NodeId, tensor: DenseTensor, physical: Vec<PhysicalMode>) -> Result<()> {
        if self.nodes.contains_key(&id) {
            return Err(invalid(format!("node {id} already exists")));
        }
        self.nodes.insert(id, tensor);
        self.physical.insert(id, physical);
        Ok(())
    }

    /// Adds a bond between two existing nodes and returns its id.
    pub fn add_bond(&mut self, label: impl Into<String>, a: NodeId, b: NodeId, rank: usize) -> Result<EdgeId> {
        let label = label.into();
        if !self.nodes.contains_key(&a) || !self.nodes.contains_key(&b) {
            return Err(invalid(format!("bond {label}: unknown endpoint")));
        }
        if a == b {
            return Err(invalid(format!("bond {label} would be a self-loop on {a}")));
        }
        if rank == 0 {
            return Err(invalid(format!("bond {label} has rank 0")));
        }
        if self.bond_by_label(&label).is_some() {
            return Err(invalid(format!("bond label {label} already in use")));
        }
        let id = self.next_edge_id();
        self.bonds.insert(id, Bond { id, a, b, rank, label });
        Ok(id)
    }

    pub(crate) fn next_edge_id(&self) -> EdgeId {
        EdgeId(self.bonds.keys().next_back().map_or(0, |e| e.0 + 1))
    }

    pub(crate) fn next_node_id(&self) -> NodeId {
        NodeId(self.nodes.keys().next_back().map_or(1, |n| n.0 + 1))
    }

    /// A bond label not used by any bond or mode, derived from `stem`.
    pub fn fresh_label(&self, stem: &str) -> String {
        let used = |l: &str| {
            self.bond_by_label(l).is_some()
                || self.physical.values().flatten().any(|p| p.label == l)
        };
        if !used(stem) {
            return stem.to_string();
        }
        (1..)
            .map(|k| format!("{stem}'{k}"))
            .find(|l| !used(l))
            .expect("unbounded label space")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &DenseTensor)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    pub fn tensor(&self, id: NodeId) -> Option<&DenseTensor> {
        self.nodes.get(&id)
    }

    pub fn physical(&self, id: NodeId) -> &[PhysicalMode] {
        self.physical.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn bonds(&self) -> impl Iterator<Item = &Bond> {
        self.bonds.values()
    }

    pub fn bond(&self, id: EdgeId) -> Option<&Bond> {
        self.bonds.get(&id)
    }

    pub fn bond_by_label(&self, label: &str) -> Option<&Bond> {
        self.bonds.values().find(|b| b.label == label)
    }

    pub fn incident(&self, node: NodeId) -> impl Iterator<Item = &Bond> {
        self.bonds.values().filter(move |b| b.touches(node))
    }

    pub fn bonds_between(&self, x: NodeId, y: NodeId) -> Vec<&Bond> {
        self.bonds.values().filter(|b| b.joins(x, y)).collect()
    }

    pub fn neighbors(&self, node: NodeId) -> BTreeSet<NodeId> {
        self.incident(node).filter_map(|b| b.other(node)).collect()
    }

    /// Physical labels and extents, ordered by node id.
    pub fn physical_modes(&self) -> Vec<(NodeId, PhysicalMode)> {
        self.physical
            .iter()
            .flat_map(|(id, ps)| ps.iter().map(move |p| (*id, p.clone())))
            .collect()
    }

    /// Number of entries of the full tensor, saturating at `usize::MAX`.
    pub fn full_size(&self) -> usize {
        self.physical
            .values()
            .flatten()
            .fold(1usize, |acc, p| acc.saturating_mul(p.dim))
    }

    pub fn ranks(&self) -> BTreeMap<String, usize> {
        self.bonds.values().map(|b| (b.label.clone(), b.rank)).collect()
    }

    /// Mode order a node tensor is stored in: incident bonds by label, then
    /// physical modes.
    pub fn canonical_modes(&self, node: NodeId) -> Vec<String> {
        let mut labels: Vec<String> = self.incident(node).map(|b| b.label.clone()).collect();
        labels.sort();
        labels.extend(self.physical(node).iter().map(|p| p.label.clone()));
        labels
    }

    /// Permutes the node tensor into canonical mode order.
    pub fn canonicalize(&mut self, node: NodeId) -> Result<()> {
        let order = self.canonical_modes(node);
        let t = self
            .nodes
            .get(&node)
            .ok_or_else(|| invalid(format!("unknown node {node}")))?;
        if t.labels() != order.as_slice() {
            let p = t.permuted(&order)?;
            self.nodes.insert(node, p);
        }
        Ok(())
    }

    pub(crate) fn set_tensor(&mut self, node: NodeId, t: DenseTensor) {
        self.nodes.insert(node, t);
    }

    pub(crate) fn set_physical(&mut self, node: NodeId, p: Vec<PhysicalMode>) {
        self.physical.insert(node, p);
    }

    pub(crate) fn remove_node(&mut self, node: NodeId) -> Option<(DenseTensor, Vec<PhysicalMode>)> {
        let t = self.nodes.remove(&node)?;
        let p = self.physical.remove(&node).unwrap_or_default();
        Some((t, p))
    }

    pub(crate) fn remove_bond(&mut self, id: EdgeId) -> Option<Bond> {
        self.bonds.remove(&id)
    }

    pub(crate) fn bond_mut(&mut self, id: EdgeId) -> Option<&mut Bond> {
        self.bonds.get_mut(&id)
    }

    pub(crate) fn insert_bond(&mut self, bond: Bond) {
        self.bonds.insert(bond.id, bond);
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if self.nodes.is_empty() {
            v.push(Violation::Empty);
        }
        let mut labels = BTreeSet::new();
        for b in self.bonds.values() {
            if !labels.insert(b.label.as_str()) {
                v.push(Violation::DuplicateLabel { label: b.label.clone() });
            }
            if b.rank == 0 {
                v.push(Violation::ZeroRank { bond: b.label.clone() });
            }
            if b.a == b.b {
                v.push(Violation::SelfLoop { bond: b.label.clone() });
            }
            for n in [b.a, b.b] {
                if !self.nodes.contains_key(&n) {
                    v.push(Violation::UnknownEndpoint { bond: b.label.clone(), node: n });
                }
            }
        }
        for p in self.physical.values().flatten() {
            if !labels.insert(p.label.as_str()) {
                v.push(Violation::DuplicateLabel { label: p.label.clone() });
            }
        }
        for (&id, t) in &self.nodes {
            let phys = self.physical(id);
            if phys.len() != 1 {
                v.push(Violation::PhysicalModeCount { node: id, count: phys.len() });
            }
            let mut expected: Vec<(String, usize)> =
                self.incident(id).map(|b| (b.label.clone(), b.rank)).collect();
            expected.extend(phys.iter().map(|p| (p.label.clone(), p.dim)));
            for (label, extent) in &expected {
                match t.extent(label) {
                    None => v.push(Violation::MissingMode { node: id, label: label.clone() }),
                    Some(actual) if actual != *extent => v.push(Violation::ExtentMismatch {
                        node: id,
                        label: label.clone(),
                        expected: *extent,
                        actual,
                    }),
                    _ => {}
                }
            }
            for l in t.labels() {
                if !expected.iter().any(|(e, _)| e == l) {
                    v.push(Violation::UnexpectedMode { node: id, label: l.clone() });
                }
            }
        }
        for id in self.physical.keys() {
            if !self.nodes.contains_key(id) {
                v.push(Violation::MissingTensor { node: *id });
            }
        }
        let components = self.components(false).len();
        if components > 1 {
            v.push(Violation::Disconnected { components });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    /// Connected components of the bond graph, optionally ignoring rank-1 bonds.
    pub(crate) fn components(&self, ignore_rank_one: bool) -> Vec<Vec<NodeId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.nodes.keys() {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                for b in self.incident(n) {
                    if ignore_rank_one && b.rank == 1 {
                        continue;
                    }
                    if let Some(m) = b.other(n) {
                        if self.nodes.contains_key(&m) && seen.insert(m) {
                            comp.push(m);
                            queue.push_back(m);
                        }
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    /// Classifies the bond graph. Rank-1 bonds are neglected whenever the
    /// remaining graph stays connected.
    pub fn topology(&self) -> Topology {
        if self.nodes.len() > 1 && self.components(true).len() == 1 {
            shape::classify(self, true)
        } else {
            shape::classify(self, false)
        }
    }

    /// Nodes and bonds of a ring in traversal order, ignoring nothing.
    ///
    /// Starts at the smallest node id and heads towards its smaller-id
    /// neighbour; bond `k` joins node `k` and node `k+1`, the last bond closes
    /// the ring.
    pub fn ring_order(&self) -> Option<(Vec<NodeId>, Vec<EdgeId>)> {
        shape::ring_order(self)
    }

    /// Nodes and bonds of a string in order, starting from the end with the
    /// smaller node id.
    pub fn string_order(&self) -> Option<(Vec<NodeId>, Vec<EdgeId>)> {
        shape::string_order(self)
    }

    /// Recovers the lattice coordinates of a grid-shaped network.
    pub fn grid_layout(&self) -> Option<GridLayout> {
        shape::grid_layout(self, false)
    }
}

/// Convenience wrapper for [`TensorNetwork::topology`].
pub fn topology_of(net: &TensorNetwork) -> Topology {
    net.topology()
}

fn bond_label(k: usize) -> String {
    format!("j_{k}")
}

fn physical_label(k: usize) -> String {
    format!("s_{k}")
}

/// Bond endpoints of a topology, in label order `j_1, j_2, …`, with 1-based
/// node ids.
pub fn topology_bonds(topology: &Topology) -> Result<Vec<(u32, u32)>> {
    match *topology {
        Topology::Chain { d } => {
            if d < 3 {
                return Err(invalid(format!("a chain needs at least 3 nodes, got {d}")));
            }
            Ok((1..=d as u32).map(|k| (k, k % d as u32 + 1)).collect())
        }
        Topology::Train { d } => {
            if d < 2 {
                return Err(invalid(format!("a train needs at least 2 nodes, got {d}")));
            }
            Ok((1..d as u32).map(|k| (k, k + 1)).collect())
        }
        Topology::Grid { rows, cols } => {
            if rows < 2 || cols < 2 {
                return Err(invalid(format!("a grid needs at least 2x2 nodes, got {rows}x{cols}")));
            }
            let id = |r: usize, c: usize| (r * cols + c + 1) as u32;
            let mut out = Vec::new();
            for r in 0..rows {
                for c in 0..cols - 1 {
                    out.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    for c in 0..cols {
                        out.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            Ok(out)
        }
        Topology::General => Err(invalid("cannot build a General topology")),
    }
}

/// Builds a network of the given shape.
///
/// `phys_dims` has one extent per node (id order), `ranks` one rank per bond
/// in label order `j_1, j_2, …` (rows of horizontal bonds interleaved with
/// the vertical bonds below them for grids).
pub fn build(topology: &Topology, phys_dims: &[usize], ranks: &[usize], fill: Fill) -> Result<TensorNetwork> {
    let edges = topology_bonds(topology)?;
    let nodes = topology.node_count().expect("concrete topology");
    if phys_dims.len() != nodes {
        return Err(invalid(format!("{topology} needs {nodes} physical extents, got {}", phys_dims.len())));
    }
    if ranks.len() != edges.len() {
        return Err(invalid(format!("{topology} needs {} bond ranks, got {}", edges.len(), ranks.len())));
    }
    if let Some(k) = phys_dims.iter().position(|&n| n == 0) {
        return Err(invalid(format!("physical extent of node {} is 0", k + 1)));
    }
    if let Some(k) = ranks.iter().position(|&r| r == 0) {
        return Err(invalid(format!("rank of bond {} is 0", bond_label(k + 1))));
    }

    let mut net = TensorNetwork::new();
    // Placeholder scalars; replaced once the bonds are known.
    for (k, &n) in phys_dims.iter().enumerate() {
        let id = NodeId(k as u32 + 1);
        net.add_node(id, DenseTensor::scalar(0.0), vec![PhysicalMode { label: physical_label(k + 1), dim: n }])?;
    }
    for (k, (&(a, b), &r)) in edges.iter().zip(ranks).enumerate() {
        net.add_bond(bond_label(k + 1), NodeId(a), NodeId(b), r)?;
    }
    let mut source = match fill {
        Fill::SeededRandom(seed) => Some(rng::UniformSource::new(seed)),
        Fill::Zeros => None,
    };
    let ids: Vec<NodeId> = net.node_ids().collect();
    for id in ids {
        let labels = net.canonical_modes(id);
        let shape: Vec<usize> = labels.iter().map(|l| net.mode_extent(id, l).expect("known mode")).collect();
        let len = shape.iter().product();
        let data = match source.as_mut() {
            Some(s) => s.fill(len),
            None => vec![0.0; len],
        };
        net.set_tensor(id, DenseTensor::new(labels, shape, data)?);
    }
    Ok(net)
}

/// Same extent `n` on every node and rank `r` on every bond.
pub fn build_uniform(topology: &Topology, n: usize, r: usize, fill: Fill) -> Result<TensorNetwork> {
    let nodes = topology
        .node_count()
        .ok_or_else(|| invalid("cannot build a General topology"))?;
    let bonds = topology.bond_count().expect("concrete topology");
    build(topology, &vec![n; nodes], &vec![r; bonds], fill)
}

impl TensorNetwork {
    /// Extent a mode of `node` should have according to the bonds and
    /// physical modes.
    pub fn mode_extent(&self, node: NodeId, label: &str) -> Option<usize> {
        self.incident(node)
            .find(|b| b.label == label)
            .map(|b| b.rank)
            .or_else(|| self.physical(node).iter().find(|p| p.label == label).map(|p| p.dim))
    }
}

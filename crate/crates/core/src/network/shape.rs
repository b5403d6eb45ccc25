use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{EdgeId, NodeId, TensorNetwork, Topology};

/// Lattice coordinates of a grid-shaped network.
///
/// `(0, 0)` is the corner with the smallest node id; row 0 runs towards the
/// smaller-id adjacent corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    nodes: Vec<NodeId>,
    horizontal: Vec<EdgeId>,
    vertical: Vec<EdgeId>,
}

impl GridLayout {
    pub fn node(&self, r: usize, c: usize) -> NodeId {
        self.nodes[r * self.cols + c]
    }

    /// Bond between `(r, c)` and `(r, c + 1)`.
    pub fn horizontal(&self, r: usize, c: usize) -> EdgeId {
        self.horizontal[r * (self.cols - 1) + c]
    }

    /// Bond between `(r, c)` and `(r + 1, c)`.
    pub fn vertical(&self, r: usize, c: usize) -> EdgeId {
        self.vertical[r * self.cols + c]
    }

    pub fn coords(&self, id: NodeId) -> Option<(usize, usize)> {
        self.nodes
            .iter()
            .position(|&n| n == id)
            .map(|k| (k / self.cols, k % self.cols))
    }
}

struct Graph {
    nodes: Vec<NodeId>,
    edges: Vec<(EdgeId, NodeId, NodeId)>,
    adj: BTreeMap<NodeId, Vec<(NodeId, EdgeId)>>,
}

impl Graph {
    fn new(net: &TensorNetwork, ignore_rank_one: bool) -> Graph {
        let nodes: Vec<NodeId> = net.node_ids().collect();
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, EdgeId)>> = nodes.iter().map(|&n| (n, Vec::new())).collect();
        let mut edges = Vec::new();
        for b in net.bonds() {
            if ignore_rank_one && b.rank == 1 {
                continue;
            }
            edges.push((b.id, b.a, b.b));
            if let Some(v) = adj.get_mut(&b.a) {
                v.push((b.b, b.id));
            }
            if let Some(v) = adj.get_mut(&b.b) {
                v.push((b.a, b.id));
            }
        }
        Graph { nodes, edges, adj }
    }

    fn degree(&self, n: NodeId) -> usize {
        self.adj[&n].len()
    }

    fn has_parallel(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.edges
            .iter()
            .any(|&(_, a, b)| a == b || !seen.insert((a.min(b), a.max(b))))
    }

    fn distances(&self, from: NodeId) -> HashMap<NodeId, usize> {
        let mut dist = HashMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            let dn = dist[&n];
            for &(m, _) in &self.adj[&n] {
                dist.entry(m).or_insert_with(|| {
                    queue.push_back(m);
                    dn + 1
                });
            }
        }
        dist
    }

    fn connected(&self) -> bool {
        self.nodes.first().is_none_or(|&s| self.distances(s).len() == self.nodes.len())
    }

    fn is_ring(&self) -> bool {
        let d = self.nodes.len();
        d >= 3
            && self.edges.len() == d
            && !self.has_parallel()
            && self.nodes.iter().all(|&n| self.degree(n) == 2)
            && self.connected()
    }

    fn is_string(&self) -> bool {
        let d = self.nodes.len();
        d >= 2
            && self.edges.len() == d - 1
            && self.nodes.iter().all(|&n| self.degree(n) <= 2)
            && self.connected()
    }

    /// Follows a ring or string from `start` through `first` until it ends or
    /// returns to `start`.
    fn walk(&self, start: NodeId, first: NodeId) -> (Vec<NodeId>, Vec<EdgeId>) {
        let mut nodes = vec![start];
        let mut edges = Vec::new();
        let mut cur = start;
        let mut next = Some(first);
        while let Some(n) = next {
            let &(_, e) = self.adj[&cur].iter().find(|(m, _)| *m == n).expect("adjacent");
            edges.push(e);
            if n == start {
                break;
            }
            nodes.push(n);
            let from = std::mem::replace(&mut cur, n);
            next = self.adj[&cur].iter().map(|(m, _)| *m).find(|&m| m != from);
        }
        (nodes, edges)
    }
}

pub(super) fn classify(net: &TensorNetwork, ignore_rank_one: bool) -> Topology {
    let g = Graph::new(net, ignore_rank_one);
    let d = g.nodes.len();
    if g.is_ring() {
        Topology::Chain { d }
    } else if g.is_string() {
        Topology::Train { d }
    } else if let Some(layout) = layout(&g) {
        Topology::Grid { rows: layout.rows, cols: layout.cols }
    } else {
        Topology::General
    }
}

pub(super) fn ring_order(net: &TensorNetwork) -> Option<(Vec<NodeId>, Vec<EdgeId>)> {
    let g = Graph::new(net, false);
    if !g.is_ring() {
        return None;
    }
    let start = g.nodes[0];
    let first = g.adj[&start].iter().map(|(m, _)| *m).min()?;
    Some(g.walk(start, first))
}

pub(super) fn string_order(net: &TensorNetwork) -> Option<(Vec<NodeId>, Vec<EdgeId>)> {
    let g = Graph::new(net, false);
    if !g.is_string() {
        return None;
    }
    let start = *g.nodes.iter().find(|&&n| g.degree(n) == 1)?;
    let first = g.adj[&start][0].0;
    Some(g.walk(start, first))
}

pub(super) fn grid_layout(net: &TensorNetwork, ignore_rank_one: bool) -> Option<GridLayout> {
    layout(&Graph::new(net, ignore_rank_one))
}

fn layout(g: &Graph) -> Option<GridLayout> {
    let n = g.nodes.len();
    if n < 4 || g.has_parallel() || !g.connected() {
        return None;
    }
    let corners: Vec<NodeId> = g.nodes.iter().copied().filter(|&v| g.degree(v) == 2).collect();
    if corners.len() != 4 || g.nodes.iter().any(|&v| !(2..=4).contains(&g.degree(v))) {
        return None;
    }
    let s = corners[0];
    let ds = g.distances(s);
    let far = *corners[1..].iter().max_by_key(|c| (ds[c], std::cmp::Reverse(**c)))?;
    let others: Vec<NodeId> = corners[1..].iter().copied().filter(|&c| c != far).collect();
    let (a, b) = (others[0], others[1]);
    let cols = ds[&a] + 1;
    let rows = ds[&b] + 1;
    if rows * cols != n || ds[&far] != rows + cols - 2 {
        return None;
    }
    let da = g.distances(a);
    let mut grid = vec![None; n];
    for &v in &g.nodes {
        let sum = ds[&v] + cols - 1;
        if sum < da[&v] || (sum - da[&v]) % 2 != 0 {
            return None;
        }
        let c = (sum - da[&v]) / 2;
        if c >= cols || c > ds[&v] {
            return None;
        }
        let r = ds[&v] - c;
        if r >= rows || grid[r * cols + c].is_some() {
            return None;
        }
        grid[r * cols + c] = Some(v);
    }
    let nodes: Vec<NodeId> = grid.into_iter().collect::<Option<_>>()?;
    if g.edges.len() != 2 * rows * cols - rows - cols {
        return None;
    }
    let edge = |x: NodeId, y: NodeId| g.adj[&x].iter().find(|(m, _)| *m == y).map(|(_, e)| *e);
    let mut horizontal = Vec::new();
    let mut vertical = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                horizontal.push(edge(nodes[r * cols + c], nodes[r * cols + c + 1])?);
            }
            if r + 1 < rows {
                vertical.push(edge(nodes[r * cols + c], nodes[(r + 1) * cols + c])?);
            }
        }
    }
    Some(GridLayout { rows, cols, nodes, horizontal, vertical })
}

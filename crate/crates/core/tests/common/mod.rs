//! Reference contraction written with plain loops, independent of the
//! library's tensor kernels.

#![allow(dead_code)]

use tnconv::{NodeId, TensorNetwork};

#[derive(Clone, Debug)]
pub struct Dense {
    pub labels: Vec<String>,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Offsets of every multi-index over `dims`, walked row-major, given the
/// stride each dim has in some tensor.
fn offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for (&d, &s) in dims.iter().zip(strides) {
        let mut next = Vec::with_capacity(out.len() * d);
        for &base in &out {
            for i in 0..d {
                next.push(base + i * s);
            }
        }
        out = next;
    }
    out
}

impl Dense {
    pub fn of_node(net: &TensorNetwork, id: NodeId) -> Dense {
        let t = net.tensor(id).unwrap();
        Dense { labels: t.labels().to_vec(), shape: t.shape().to_vec(), data: t.data().to_vec() }
    }

    fn stride_of(&self, label: &str) -> usize {
        let i = self.labels.iter().position(|l| l == label).unwrap();
        strides(&self.shape)[i]
    }

    fn extent(&self, label: &str) -> usize {
        self.shape[self.labels.iter().position(|l| l == label).unwrap()]
    }

    /// Sums over every label the two tensors share.
    pub fn pair(&self, other: &Dense) -> Dense {
        let shared: Vec<String> = self.labels.iter().filter(|l| other.labels.contains(l)).cloned().collect();
        let a_open: Vec<String> = self.labels.iter().filter(|l| !shared.contains(l)).cloned().collect();
        let b_open: Vec<String> = other.labels.iter().filter(|l| !shared.contains(l)).cloned().collect();

        let shared_dims: Vec<usize> = shared.iter().map(|l| self.extent(l)).collect();
        let sa: Vec<usize> = shared.iter().map(|l| self.stride_of(l)).collect();
        let sb: Vec<usize> = shared.iter().map(|l| other.stride_of(l)).collect();
        let inner_a = offsets(&shared_dims, &sa);
        let inner_b = offsets(&shared_dims, &sb);

        let a_dims: Vec<usize> = a_open.iter().map(|l| self.extent(l)).collect();
        let b_dims: Vec<usize> = b_open.iter().map(|l| other.extent(l)).collect();
        let outer_a = offsets(&a_dims, &a_open.iter().map(|l| self.stride_of(l)).collect::<Vec<_>>());
        let outer_b = offsets(&b_dims, &b_open.iter().map(|l| other.stride_of(l)).collect::<Vec<_>>());

        let mut data = Vec::with_capacity(outer_a.len() * outer_b.len());
        for &oa in &outer_a {
            for &ob in &outer_b {
                let mut acc = 0.0;
                for (ia, ib) in inner_a.iter().zip(&inner_b) {
                    acc += self.data[oa + ia] * other.data[ob + ib];
                }
                data.push(acc);
            }
        }
        let mut labels = a_open;
        labels.extend(b_open);
        let mut shape = a_dims;
        shape.extend(b_dims);
        Dense { labels, shape, data }
    }

    /// Entries listed with `order` as the row-major mode order.
    pub fn in_order(&self, order: &[String]) -> Vec<f64> {
        assert_eq!(order.len(), self.labels.len(), "{order:?} vs {:?}", self.labels);
        let dims: Vec<usize> = order.iter().map(|l| self.extent(l)).collect();
        let st: Vec<usize> = order.iter().map(|l| self.stride_of(l)).collect();
        offsets(&dims, &st).into_iter().map(|o| self.data[o]).collect()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Contracts the given nodes, absorbing a connected neighbour whenever
/// one exists. Bonds leaving the set stay open.
pub fn contract_nodes(net: &TensorNetwork, nodes: &[NodeId]) -> Dense {
    let mut left: Vec<NodeId> = nodes.to_vec();
    left.sort();
    let mut acc = Dense::of_node(net, left.remove(0));
    while !left.is_empty() {
        let pos = left
            .iter()
            .position(|n| net.tensor(*n).unwrap().labels().iter().any(|l| acc.labels.contains(l)))
            .unwrap_or(0);
        acc = acc.pair(&Dense::of_node(net, left.remove(pos)));
    }
    acc
}

/// Physical labels in node-id order.
pub fn physical_order(net: &TensorNetwork) -> Vec<String> {
    net.node_ids().flat_map(|n| net.physical(n).iter().map(|p| p.label.clone()).collect::<Vec<_>>()).collect()
}

/// Full tensor of `net` in the physical order of `reference`.
pub fn full(net: &TensorNetwork, reference: &TensorNetwork) -> Vec<f64> {
    let ids: Vec<NodeId> = net.node_ids().collect();
    contract_nodes(net, &ids).in_order(&physical_order(reference))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖a‖` over full tensors.
pub fn relative(a: &TensorNetwork, b: &TensorNetwork) -> f64 {
    let va = full(a, a);
    let vb = full(b, a);
    distance(&va, &vb) / norm(&va)
}

/// Norm of the network without `u` and `w`, bonds to them left open.
pub fn environment(net: &TensorNetwork, u: NodeId, w: NodeId) -> f64 {
    let rest: Vec<NodeId> = net.node_ids().filter(|n| *n != u && *n != w).collect();
    // Components of the remainder are contracted separately; their norms
    // multiply because they share no summed index.
    let mut seen: Vec<NodeId> = Vec::new();
    let mut total = 1.0;
    for &start in &rest {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = vec![start];
        let mut i = 0;
        while i < comp.len() {
            for m in net.neighbors(comp[i]) {
                if rest.contains(&m) && !comp.contains(&m) {
                    comp.push(m);
                }
            }
            i += 1;
        }
        seen.extend(&comp);
        total *= contract_nodes(net, &comp).norm();
    }
    total
}

/// Deterministic parameter stream for instance sweeps.
pub struct Draw(tnconv::network::rng::UniformSource);

impl Draw {
    pub fn new(seed: u64) -> Draw {
        Draw(tnconv::network::rng::UniformSource::new(seed))
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.0.next_unit() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    pub fn seed(&mut self) -> u64 {
        (self.0.next_unit() * 1e15) as u64
    }
}

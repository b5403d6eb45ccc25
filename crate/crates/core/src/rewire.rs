//! Local rewrites of a tensor network.
//!
//! Each primitive reads and replaces at most two node tensors; every other
//! tensor is left untouched. SVD-based primitives are split into a pure
//! planning phase that produces a [`Patch`] from a shared borrow and an
//! [`apply`] phase, so that steps on disjoint node pairs can be planned
//! concurrently.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{svd_split, TruncationPolicy};
use crate::network::{Bond, EdgeId, NodeId, PhysicalMode, TensorNetwork};
use crate::tensor::{contract, DenseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    SplitNode,
    MoveEdge,
    MergeParallel,
}

/// What one SVD step did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: StepKind,
    /// Left node (keeps the orthonormal factor), then right node.
    pub nodes: [NodeId; 2],
    /// Labels of the bonds the step operated on, e.g. `[moving, across]`.
    pub bonds: Vec<String>,
    /// Label of the bond produced by the split.
    pub new_bond: String,
    pub matrix_shape: (usize, usize),
    /// `min(rows, cols, product of the ranks feeding the new bond)`.
    pub rank_bound: usize,
    pub kept_rank: usize,
    /// Frobenius norm of the dropped singular values. Always 0 under the
    /// exact policy, which only drops values at rounding level.
    pub discarded_mass: f64,
    pub seconds: f64,
}

/// A planned SVD step, ready to be applied.
#[derive(Clone, Debug)]
pub struct Patch {
    left: NodeId,
    right: NodeId,
    left_tensor: DenseTensor,
    right_tensor: DenseTensor,
    left_physical: Vec<PhysicalMode>,
    right_physical: Vec<PhysicalMode>,
    removed: Vec<EdgeId>,
    moved: Vec<(EdgeId, NodeId, NodeId)>,
    new_bond: Bond,
    record: StepRecord,
}

impl Patch {
    pub fn record(&self) -> &StepRecord {
        &self.record
    }

    /// Nodes whose tensors the patch replaces.
    pub fn nodes(&self) -> [NodeId; 2] {
        [self.left, self.right]
    }
}

/// Writes a planned step into the network.
pub fn apply(net: &mut TensorNetwork, patch: Patch) -> StepRecord {
    for id in &patch.removed {
        net.remove_bond(*id);
    }
    for &(id, from, to) in &patch.moved {
        if let Some(b) = net.bond_mut(id) {
            if b.a == from {
                b.a = to;
            } else if b.b == from {
                b.b = to;
            }
        }
    }
    net.insert_bond(patch.new_bond);
    net.set_tensor(patch.left, patch.left_tensor);
    net.set_tensor(patch.right, patch.right_tensor);
    net.set_physical(patch.left, patch.left_physical);
    net.set_physical(patch.right, patch.right_physical);
    patch.record
}

enum Source {
    /// Fuse two existing nodes over every bond between them.
    Pair(NodeId, NodeId),
    /// Split one node; the right half becomes a new node.
    Single(NodeId, NodeId),
}

struct SplitSpec<'a> {
    source: Source,
    left_labels: &'a [String],
    policy: &'a TruncationPolicy,
    new_label: String,
    new_id: EdgeId,
    kind: StepKind,
    bonds: Vec<String>,
}

fn tensor_of(net: &TensorNetwork, id: NodeId) -> Result<&DenseTensor> {
    net.tensor(id).ok_or_else(|| invalid(format!("unknown node {id}")))
}

fn plan_split(net: &TensorNetwork, spec: SplitSpec<'_>) -> Result<Patch> {
    let start = Instant::now();
    let (u, w, fused, between, physical) = match spec.source {
        Source::Pair(u, w) => {
            let between: Vec<&Bond> = net.bonds_between(u, w);
            let labels: Vec<&str> = between.iter().map(|b| b.label.as_str()).collect();
            let fused = contract(tensor_of(net, u)?, tensor_of(net, w)?, &labels)?;
            let mut physical = net.physical(u).to_vec();
            physical.extend_from_slice(net.physical(w));
            (u, w, fused, between, physical)
        }
        Source::Single(u, w) => (u, w, tensor_of(net, u)?.clone(), Vec::new(), net.physical(u).to_vec()),
    };

    let left: &[String] = spec.left_labels;
    for (i, l) in left.iter().enumerate() {
        if !fused.has_label(l) || left[..i].contains(l) {
            return Err(invalid(format!("`{l}` is not a free mode of the fused tensor, or is listed twice")));
        }
    }
    let right: Vec<String> = fused.labels().iter().filter(|l| !left.contains(l)).cloned().collect();
    if right.is_empty() {
        return Err(invalid("split would leave the right factor without modes"));
    }
    if let Source::Single(..) = spec.source {
        if left.is_empty() {
            return Err(invalid("split needs a nonempty left partition"));
        }
    }

    let matrix = fused.matricize(left, &right)?;
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let split = svd_split(&matrix, spec.policy)?;
    let k = split.kept_rank;

    let extent = |l: &String| (l.clone(), fused.extent(l).expect("mode of fused tensor"));
    let row_modes: Vec<(String, usize)> = left.iter().map(extent).collect();
    let col_modes: Vec<(String, usize)> = right.iter().map(extent).collect();
    let new = (spec.new_label.clone(), k);
    let left_tensor = DenseTensor::from_matrix(&split.left, &row_modes, std::slice::from_ref(&new))?;
    let right_tensor = DenseTensor::from_matrix(&split.right, std::slice::from_ref(&new), &col_modes)?;

    let (left_physical, right_physical): (Vec<PhysicalMode>, Vec<PhysicalMode>) =
        physical.into_iter().partition(|p| left.contains(&p.label));

    let between_ids: BTreeSet<EdgeId> = between.iter().map(|b| b.id).collect();
    let mut moved = Vec::new();
    for b in net.bonds().filter(|b| !between_ids.contains(&b.id)) {
        let on_left = left.contains(&b.label);
        if on_left && b.touches(w) && !b.touches(u) {
            moved.push((b.id, w, u));
        } else if !on_left && b.touches(u) {
            moved.push((b.id, u, w));
        }
    }
    // Modes that change sides, plus the contracted bonds, feed the new bond.
    let rank_bound = match spec.source {
        Source::Single(..) => rows.min(cols),
        Source::Pair(..) => {
            let tu = tensor_of(net, u)?;
            let tw = tensor_of(net, w)?;
            let crossing = fused.labels().iter().filter(|l| {
                let on_left = left.contains(l);
                (tu.has_label(l) && !on_left) || (tw.has_label(l) && on_left)
            });
            let feeding = between
                .iter()
                .map(|b| b.rank)
                .chain(crossing.map(|l| fused.extent(l).expect("fused mode")))
                .fold(1usize, |acc, r| acc.saturating_mul(r));
            rows.min(cols).min(feeding)
        }
    };

    let canonical = |t: DenseTensor, phys: &[PhysicalMode]| -> Result<DenseTensor> {
        let mut order: Vec<String> = t
            .labels()
            .iter()
            .filter(|l| !phys.iter().any(|p| &p.label == *l))
            .cloned()
            .collect();
        order.sort();
        order.extend(phys.iter().map(|p| p.label.clone()));
        if order.as_slice() == t.labels() {
            Ok(t)
        } else {
            t.permuted(&order)
        }
    };
    let left_tensor = canonical(left_tensor, &left_physical)?;
    let right_tensor = canonical(right_tensor, &right_physical)?;

    let discarded_mass = if spec.policy.is_exact() { 0.0 } else { split.discarded_mass };
    let record = StepRecord {
        kind: spec.kind,
        nodes: [u, w],
        bonds: spec.bonds,
        new_bond: spec.new_label.clone(),
        matrix_shape: (rows, cols),
        rank_bound,
        kept_rank: k,
        discarded_mass,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Patch {
        left: u,
        right: w,
        left_tensor,
        right_tensor,
        left_physical,
        right_physical,
        removed: between_ids.into_iter().collect(),
        moved,
        new_bond: Bond { id: spec.new_id, a: u, b: w, rank: k, label: spec.new_label },
        record,
    })
}

fn bond_of(net: &TensorNetwork, id: EdgeId) -> Result<&Bond> {
    net.bond(id).ok_or_else(|| invalid(format!("unknown bond {id}")))
}

/// Replaces the endpoints of `bond` by a single node holding their
/// contraction over every bond between them. The merged node keeps the id of
/// `bond.a` and both physical modes.
pub fn contract_bond(net: &mut TensorNetwork, bond: EdgeId) -> Result<NodeId> {
    let b = bond_of(net, bond)?.clone();
    let between: Vec<Bond> = net.bonds_between(b.a, b.b).into_iter().cloned().collect();
    let labels: Vec<&str> = between.iter().map(|x| x.label.as_str()).collect();
    let merged = contract(tensor_of(net, b.a)?, tensor_of(net, b.b)?, &labels)?;
    let (_, phys_b) = net.remove_node(b.b).expect("endpoint exists");
    for x in &between {
        net.remove_bond(x.id);
    }
    let redirect: Vec<EdgeId> = net.incident(b.b).map(|x| x.id).collect();
    for id in redirect {
        let x = net.bond_mut(id).expect("incident bond");
        if x.a == b.b {
            x.a = b.a;
        } else {
            x.b = b.a;
        }
    }
    let mut phys = net.physical(b.a).to_vec();
    phys.extend(phys_b);
    net.set_physical(b.a, phys);
    net.set_tensor(b.a, merged);
    net.canonicalize(b.a)?;
    Ok(b.a)
}

/// Plans [`split_node`].
pub fn plan_split_node(
    net: &TensorNetwork,
    node: NodeId,
    left_labels: &[String],
    policy: &TruncationPolicy,
) -> Result<Patch> {
    tensor_of(net, node)?;
    let new_label = net.fresh_label(&format!("j_{}", net.bond_count() + 1));
    plan_split(
        net,
        SplitSpec {
            source: Source::Single(node, net.next_node_id()),
            left_labels,
            policy,
            bonds: vec![new_label.clone()],
            new_label,
            new_id: net.next_edge_id(),
            kind: StepKind::SplitNode,
        },
    )
}

/// Splits `node` by an SVD of its `left_labels × rest` matricization. The
/// left factor keeps the node id; the right factor becomes a new node, joined
/// by a fresh bond. Returns the new node id.
pub fn split_node(
    net: &mut TensorNetwork,
    node: NodeId,
    left_labels: &[String],
    policy: &TruncationPolicy,
) -> Result<(NodeId, StepRecord)> {
    let patch = plan_split_node(net, node, left_labels, policy)?;
    let id = patch.right;
    net.add_node(id, DenseTensor::scalar(0.0), Vec::new())?;
    Ok((id, apply(net, patch)))
}

/// Plans [`move_edge`].
pub fn plan_move_edge(
    net: &TensorNetwork,
    moving: EdgeId,
    across: EdgeId,
    policy: &TruncationPolicy,
) -> Result<Patch> {
    let m = bond_of(net, moving)?;
    let x = bond_of(net, across)?;
    if moving == across {
        return Err(invalid("cannot move a bond across itself"));
    }
    let shared: Vec<NodeId> = [m.a, m.b].into_iter().filter(|n| x.touches(*n)).collect();
    let u = match shared.as_slice() {
        [u] => *u,
        [] => return Err(invalid(format!("bonds {} and {} are not adjacent", m.label, x.label))),
        _ => return Err(invalid(format!("bonds {} and {} are parallel", m.label, x.label))),
    };
    let w = x.other(u).expect("shared endpoint");
    let between: Vec<String> = net.bonds_between(u, w).iter().map(|b| b.label.clone()).collect();
    let left: Vec<String> = tensor_of(net, u)?
        .labels()
        .iter()
        .filter(|l| **l != m.label && !between.contains(l))
        .cloned()
        .collect();
    plan_split(
        net,
        SplitSpec {
            source: Source::Pair(u, w),
            left_labels: &left,
            policy,
            new_label: x.label.clone(),
            new_id: x.id,
            kind: StepKind::MoveEdge,
            bonds: vec![m.label.clone(), x.label.clone()],
        },
    )
}

/// Re-attaches `moving` from the endpoint `u` it shares with `across` to the
/// other endpoint of `across`, by one SVD of the fused pair. `across` keeps
/// its label and takes the kept rank.
pub fn move_edge(
    net: &mut TensorNetwork,
    moving: EdgeId,
    across: EdgeId,
    policy: &TruncationPolicy,
) -> Result<StepRecord> {
    let patch = plan_move_edge(net, moving, across, policy)?;
    Ok(apply(net, patch))
}

/// Plans [`merge_parallel_edges`].
pub fn plan_merge_parallel(
    net: &TensorNetwork,
    keep: EdgeId,
    absorb: EdgeId,
    policy: &TruncationPolicy,
) -> Result<Patch> {
    let e1 = bond_of(net, keep)?;
    let e2 = bond_of(net, absorb)?;
    if keep == absorb || !e1.joins(e2.a, e2.b) {
        return Err(invalid(format!("bonds {} and {} are not parallel", e1.label, e2.label)));
    }
    let (u, w) = (e1.a, e1.b);
    let between: Vec<String> = net.bonds_between(u, w).iter().map(|b| b.label.clone()).collect();
    let left: Vec<String> = tensor_of(net, u)?
        .labels()
        .iter()
        .filter(|l| !between.contains(l))
        .cloned()
        .collect();
    plan_split(
        net,
        SplitSpec {
            source: Source::Pair(u, w),
            left_labels: &left,
            policy,
            new_label: e1.label.clone(),
            new_id: e1.id,
            kind: StepKind::MergeParallel,
            bonds: vec![e1.label.clone(), e2.label.clone()],
        },
    )
}

/// Fuses every bond between the endpoints of `keep` (at least `keep` and
/// `absorb`) into one bond of numerical rank, labelled like `keep`.
pub fn merge_parallel_edges(
    net: &mut TensorNetwork,
    keep: EdgeId,
    absorb: EdgeId,
    policy: &TruncationPolicy,
) -> Result<StepRecord> {
    let patch = plan_merge_parallel(net, keep, absorb, policy)?;
    Ok(apply(net, patch))
}

/// Bijection between the pair `(a, b)`, `a < r̃` on the original bond and
/// `b < r_d` on the new bond, and the padded index `k < r_d·r̃`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexPairing {
    /// `k = a + r̃·b`.
    #[default]
    OriginalMinor,
    /// `k = b + r_d·a`.
    NewMinor,
}

impl IndexPairing {
    pub fn index(self, a: usize, b: usize, r_d: usize, r_tilde: usize) -> usize {
        match self {
            IndexPairing::OriginalMinor => a + r_tilde * b,
            IndexPairing::NewMinor => b + r_d * a,
        }
    }
}

/// Replaces `bond` (rank `r`) by two parallel bonds: the original label with
/// rank `r̃` and `new_label` with rank `r_d`, where `r_d·r̃ ≥ r`. Both
/// endpoint tensors are zero-padded to `r_d·r̃` slices and reshaped through
/// `pairing`, so the represented tensor is unchanged. Returns the new bond.
pub fn insert_artificial_edge(
    net: &mut TensorNetwork,
    bond: EdgeId,
    split: (usize, usize),
    pairing: IndexPairing,
    new_label: &str,
) -> Result<EdgeId> {
    let (r_d, r_tilde) = split;
    let b = bond_of(net, bond)?.clone();
    if r_d == 0 || r_tilde == 0 || r_d.saturating_mul(r_tilde) < b.rank {
        return Err(invalid(format!(
            "split {r_d}x{r_tilde} cannot hold bond {} of rank {}",
            b.label, b.rank
        )));
    }
    if net.fresh_label(new_label) != new_label {
        return Err(invalid(format!("label {new_label} is already in use")));
    }
    let padded = r_d * r_tilde;
    for node in [b.a, b.b] {
        let t = tensor_of(net, node)?;
        let mut order: Vec<String> = t.labels().iter().filter(|l| **l != b.label).cloned().collect();
        let rest_modes: Vec<(String, usize)> = order.iter().map(|l| (l.clone(), t.extent(l).unwrap())).collect();
        order.push(b.label.clone());
        let p = t.permuted(&order)?;
        let rest: usize = rest_modes.iter().map(|m| m.1).product();
        let mut data = vec![0.0; rest * padded];
        for i in 0..rest {
            let src = &p.data()[i * b.rank..(i + 1) * b.rank];
            let dst = &mut data[i * padded..(i + 1) * padded];
            // Both pairings coincide with the row-major storage index of the
            // two replacement modes, so padding is a plain prefix copy.
            dst[..b.rank].copy_from_slice(src);
        }
        let tail = match pairing {
            IndexPairing::OriginalMinor => [(new_label.to_string(), r_d), (b.label.clone(), r_tilde)],
            IndexPairing::NewMinor => [(b.label.clone(), r_tilde), (new_label.to_string(), r_d)],
        };
        let (mut labels, mut shape): (Vec<String>, Vec<usize>) = rest_modes.into_iter().unzip();
        for (l, e) in tail {
            labels.push(l);
            shape.push(e);
        }
        net.set_tensor(node, DenseTensor::new(labels, shape, data)?);
    }
    net.bond_mut(bond).expect("bond exists").rank = r_tilde;
    let id = net.add_bond(new_label, b.a, b.b, r_d)?;
    net.canonicalize(b.a)?;
    net.canonicalize(b.b)?;
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_uniform, Fill, Topology};
    use crate::verify::oracle_contract;
    use proptest::prelude::*;

    fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
        let b = b.permuted(a.labels()).unwrap();
        let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        d / a.frobenius_norm()
    }

    fn id(net: &TensorNetwork, label: &str) -> EdgeId {
        net.bond_by_label(label).unwrap().id
    }

    fn untouched(before: &TensorNetwork, after: &TensorNetwork, touched: &[NodeId]) -> bool {
        before
            .nodes()
            .filter(|(n, _)| !touched.contains(n))
            .all(|(n, t)| after.tensor(n) == Some(t))
    }

    #[test]
    fn contract_bond_keeps_the_tensor() {
        let mut net = build_uniform(&Topology::Chain { d: 4 }, 3, 2, Fill::SeededRandom(4)).unwrap();
        let before = oracle_contract(&net).unwrap();
        let e1 = id(&net, "j_1");
        let merged = contract_bond(&mut net, e1).unwrap();
        assert_eq!(merged, NodeId(1));
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.physical(merged).len(), 2);
        assert!(rel(&before, &oracle_contract(&net).unwrap()) < 1e-13);
    }

    #[test]
    fn contract_bond_sums_parallel_bonds_together() {
        // v1 -(a:2, b:3)- v2; brute-force the six-term sum.
        let mut net = TensorNetwork::new();
        let t1 = DenseTensor::from_fn(vec!["a", "b", "s_1"], vec![2, 3, 2], |i| {
            (1 + i[0] + 2 * i[1] + 7 * i[2]) as f64
        })
        .unwrap();
        let t2 = DenseTensor::from_fn(vec!["a", "b", "s_2"], vec![2, 3, 2], |i| {
            (3 * i[0] + i[1] + 5 * i[2]) as f64 - 2.0
        })
        .unwrap();
        net.add_node(NodeId(1), t1.clone(), vec![PhysicalMode { label: "s_1".into(), dim: 2 }]).unwrap();
        net.add_node(NodeId(2), t2.clone(), vec![PhysicalMode { label: "s_2".into(), dim: 2 }]).unwrap();
        let e = net.add_bond("a", NodeId(1), NodeId(2), 2).unwrap();
        net.add_bond("b", NodeId(1), NodeId(2), 3).unwrap();
        contract_bond(&mut net, e).unwrap();
        let t = net.tensor(NodeId(1)).unwrap();
        assert_eq!(net.bond_count(), 0);
        for s1 in 0..2 {
            for s2 in 0..2 {
                let mut want = 0.0;
                for a in 0..2 {
                    for b in 0..3 {
                        want += t1.get(&[a, b, s1]) * t2.get(&[a, b, s2]);
                    }
                }
                assert_eq!(t.get(&[s1, s2]), want);
            }
        }
    }

    #[test]
    fn first_ring_step_has_rank_n() {
        // Moving j_4 off v1 across j_1 leaves v1 with only its physical mode.
        let mut net = build_uniform(&Topology::Chain { d: 4 }, 10, 6, Fill::SeededRandom(1)).unwrap();
        let before = net.clone();
        let e1 = id(&net, "j_4");
        let e2 = id(&net, "j_1");
        let rec = move_edge(&mut net, e1, e2, &TruncationPolicy::Exact).unwrap();
        assert_eq!(rec.kept_rank, 10);
        assert_eq!(rec.rank_bound, 10);
        assert_eq!(rec.matrix_shape, (10, 360));
        assert_eq!(rec.discarded_mass, 0.0);
        assert_eq!(net.bond_by_label("j_4").unwrap().other(NodeId(2)), Some(NodeId(4)));
        assert!(net.validate().is_ok());
        assert!(untouched(&before, &net, &[NodeId(1), NodeId(2)]));
    }

    #[test]
    fn moving_a_rank_one_bond_changes_nothing() {
        let mut net = build_uniform(&Topology::Chain { d: 4 }, 3, 1, Fill::SeededRandom(8)).unwrap();
        let before = oracle_contract(&net).unwrap();
        let e1 = id(&net, "j_4");
        let e2 = id(&net, "j_1");
        move_edge(&mut net, e1, e2, &TruncationPolicy::Exact).unwrap();
        assert!(net.bonds().all(|b| b.rank == 1));
        assert!(rel(&before, &oracle_contract(&net).unwrap()) < 1e-13);
    }

    #[test]
    fn move_edge_on_a_train_with_a_chord() {
        let mut net = build_uniform(&Topology::Train { d: 5 }, 3, 2, Fill::SeededRandom(21)).unwrap();
        let chord = net.add_bond("x", NodeId(2), NodeId(4), 2).unwrap();
        for n in [2, 4] {
            let t = net.tensor(NodeId(n)).unwrap().clone();
            let labels: Vec<String> = t.labels().iter().cloned().chain(["x".to_string()]).collect();
            let mut shape = t.shape().to_vec();
            shape.push(2);
            let data: Vec<f64> = t.data().iter().flat_map(|v| [*v, 0.5 * v - 0.25]).collect();
            net.set_tensor(NodeId(n), DenseTensor::new(labels, shape, data).unwrap());
            net.canonicalize(NodeId(n)).unwrap();
        }
        assert!(net.validate().is_ok());
        let before = oracle_contract(&net).unwrap();
        let e1 = id(&net, "j_2");
        move_edge(&mut net, chord, e1, &TruncationPolicy::Exact).unwrap();
        assert!(net.bond_by_label("x").unwrap().joins(NodeId(3), NodeId(4)));
        assert!(rel(&before, &oracle_contract(&net).unwrap()) < 1e-12);
    }

    #[test]
    fn move_edge_rejects_bad_pairs() {
        let mut net = build_uniform(&Topology::Chain { d: 5 }, 2, 2, Fill::SeededRandom(2)).unwrap();
        let p = TruncationPolicy::Exact;
        let e1 = id(&net, "j_1");
        let e2 = id(&net, "j_3");
        assert!(move_edge(&mut net, e1, e2, &p).is_err());
        let e1 = id(&net, "j_1");
        let e2 = id(&net, "j_1");
        assert!(move_edge(&mut net, e1, e2, &p).is_err());
    }

    #[test]
    fn merge_of_the_center_pair() {
        // After both end moves of Chain(4), v2 and v3 are joined by j_2 and j_4.
        let mut net = build_uniform(&Topology::Chain { d: 4 }, 10, 6, Fill::SeededRandom(42)).unwrap();
        let p = TruncationPolicy::Exact;
        let e1 = id(&net, "j_4");
        let e2 = id(&net, "j_1");
        move_edge(&mut net, e1, e2, &p).unwrap();
        let e1 = id(&net, "j_4");
        let e2 = id(&net, "j_3");
        move_edge(&mut net, e1, e2, &p).unwrap();
        let e1 = id(&net, "j_2");
        let e2 = id(&net, "j_4");
        let rec = merge_parallel_edges(&mut net, e1, e2, &p).unwrap();
        assert_eq!(rec.kept_rank, 36);
        assert_eq!(rec.rank_bound, 36);
        assert!(net.bond_by_label("j_4").is_none());
        assert_eq!(net.topology(), Topology::Train { d: 4 });
    }

    #[test]
    fn merge_with_a_rank_one_partner() {
        let mut net = build_uniform(&Topology::Train { d: 3 }, 3, 3, Fill::SeededRandom(9)).unwrap();
        let e = net.add_bond("k", NodeId(1), NodeId(2), 1).unwrap();
        for n in [1, 2] {
            let t = net.tensor(NodeId(n)).unwrap().clone();
            let mut labels = t.labels().to_vec();
            labels.push("k".into());
            let mut shape = t.shape().to_vec();
            shape.push(1);
            net.set_tensor(NodeId(n), DenseTensor::new(labels, shape, t.into_data()).unwrap());
            net.canonicalize(NodeId(n)).unwrap();
        }
        let e1 = id(&net, "j_1");
        let rec = merge_parallel_edges(&mut net, e1, e, &TruncationPolicy::Exact).unwrap();
        assert_eq!(rec.kept_rank, 3);
    }

    #[test]
    fn merge_finds_a_constructed_rank() {
        // T(x, y) = Σ_{q<3} f_q(x) g_q(y) spread over two parallel bonds of rank 2.
        let f = |q: usize, x: usize| ((q + 1) as f64 * (x as f64 + 0.3)).sin();
        let g = |q: usize, y: usize| ((q + 2) as f64 * (y as f64 - 0.7)).cos();
        // Index (p, o) of the two bonds encodes q = p + 2·o when q < 3.
        let t1 = DenseTensor::from_fn(vec!["p", "o", "s_1"], vec![2, 2, 5], |i| {
            let q = i[0] + 2 * i[1];
            if q < 3 { f(q, i[2]) } else { 0.0 }
        })
        .unwrap();
        let t2 = DenseTensor::from_fn(vec!["p", "o", "s_2"], vec![2, 2, 5], |i| {
            let q = i[0] + 2 * i[1];
            if q < 3 { g(q, i[2]) } else { 0.0 }
        })
        .unwrap();
        let mut net = TensorNetwork::new();
        net.add_node(NodeId(1), t1, vec![PhysicalMode { label: "s_1".into(), dim: 5 }]).unwrap();
        net.add_node(NodeId(2), t2, vec![PhysicalMode { label: "s_2".into(), dim: 5 }]).unwrap();
        let o = net.add_bond("o", NodeId(1), NodeId(2), 2).unwrap();
        let p = net.add_bond("p", NodeId(1), NodeId(2), 2).unwrap();
        let rec = merge_parallel_edges(&mut net, o, p, &TruncationPolicy::Exact).unwrap();
        assert_eq!(rec.kept_rank, 3);
        assert_eq!(net.bond_count(), 1);
    }

    #[test]
    fn split_node_of_a_random_order_three_tensor() {
        let mut rng = crate::network::rng::UniformSource::new(77);
        let t = DenseTensor::new(vec!["a", "b", "c"], vec![2, 3, 4], rng.fill(24)).unwrap();
        let mut net = TensorNetwork::new();
        net.add_node(NodeId(1), t.clone(), vec![]).unwrap();
        let (new, rec) = split_node(&mut net, NodeId(1), &["a".to_string()], &TruncationPolicy::Exact).unwrap();
        assert_eq!(new, NodeId(2));
        assert_eq!(rec.matrix_shape, (2, 12));
        assert_eq!(rec.kept_rank, 2);
        let e = net.bonds().next().unwrap().label.clone();
        let back = contract(net.tensor(NodeId(1)).unwrap(), net.tensor(NodeId(2)).unwrap(), &[e]).unwrap();
        assert!(rel(&t, &back) < 1e-13);
    }

    #[test]
    fn split_of_an_outer_product_has_rank_one() {
        let t = DenseTensor::from_fn(vec!["a", "b", "c"], vec![3, 2, 4], |i| {
            (i[0] as f64 + 1.0) * (0.5 - i[1] as f64) * (i[2] as f64).exp()
        })
        .unwrap();
        let mut net = TensorNetwork::new();
        net.add_node(NodeId(1), t, vec![]).unwrap();
        let (_, rec) = split_node(&mut net, NodeId(1), &["b".to_string(), "c".to_string()], &TruncationPolicy::Exact)
            .unwrap();
        assert_eq!(rec.kept_rank, 1);
    }

    #[test]
    fn split_node_rejects_bad_partitions() {
        let mut net = build_uniform(&Topology::Train { d: 2 }, 2, 2, Fill::SeededRandom(3)).unwrap();
        let p = TruncationPolicy::Exact;
        assert!(split_node(&mut net, NodeId(1), &[], &p).is_err());
        assert!(split_node(&mut net, NodeId(1), &["j_1".to_string(), "s_1".to_string()], &p).is_err());
        assert!(split_node(&mut net, NodeId(1), &["zz".to_string()], &p).is_err());
        assert!(split_node(&mut net, NodeId(9), &["s_1".to_string()], &p).is_err());
    }

    fn artificial_case(rank: usize, split: (usize, usize), label: &str) -> (DenseTensor, TensorNetwork) {
        let mut net = build_uniform(&Topology::Train { d: 4 }, 3, rank, Fill::SeededRandom(rank as u64)).unwrap();
        let before = oracle_contract(&net).unwrap();
        let b = id(&net, "j_2");
        insert_artificial_edge(&mut net, b, split, IndexPairing::default(), label).unwrap();
        (before, net)
    }

    #[test]
    fn artificial_edge_square_split_is_bit_exact() {
        // "a" sorts before "j_2", so the reshaped modes stay adjacent and in
        // storage order; the oracle sums the same products in the same order.
        let (before, net) = artificial_case(4, (2, 2), "a");
        assert_eq!(net.bond_count(), 4);
        let after = oracle_contract(&net).unwrap();
        assert_eq!(before.data(), after.permuted(before.labels()).unwrap().data());
    }

    #[test]
    fn artificial_edge_rectangular_split() {
        let (before, net) = artificial_case(6, (2, 3), "j_9");
        assert_eq!(net.bond_count(), 4);
        assert_eq!(net.bond_by_label("j_2").unwrap().rank, 3);
        assert_eq!(net.bond_by_label("j_9").unwrap().rank, 2);
        assert!(net.validate().is_ok());
        assert!(rel(&before, &oracle_contract(&net).unwrap()) < 1e-14);
    }

    #[test]
    fn artificial_edge_with_padding() {
        let (before, net) = artificial_case(5, (2, 3), "a");
        let t = net.tensor(NodeId(2)).unwrap();
        // The padded slice (a=2, b=1) -> k=5 is zero.
        let pos_a = t.position("a").unwrap();
        let pos_j = t.position("j_2").unwrap();
        let mut idx = vec![0; t.order()];
        idx[pos_a] = 1;
        idx[pos_j] = 2;
        assert_eq!(t.get(&idx), 0.0);
        let after = oracle_contract(&net).unwrap();
        assert!(rel(&before, &after) == 0.0);
    }

    #[test]
    fn artificial_edge_rejects_small_splits() {
        let mut net = build_uniform(&Topology::Train { d: 3 }, 2, 5, Fill::SeededRandom(0)).unwrap();
        let b = id(&net, "j_1");
        assert!(insert_artificial_edge(&mut net, b, (2, 2), IndexPairing::default(), "x").is_err());
        assert!(insert_artificial_edge(&mut net, b, (2, 3), IndexPairing::default(), "j_2").is_err());
    }

    #[test]
    fn pairings_are_bijections() {
        for (r_d, r_t) in [(1, 1), (2, 3), (3, 2), (4, 4)] {
            for pairing in [IndexPairing::OriginalMinor, IndexPairing::NewMinor] {
                let mut seen = BTreeSet::new();
                for a in 0..r_t {
                    for b in 0..r_d {
                        let k = pairing.index(a, b, r_d, r_t);
                        assert!(k < r_d * r_t);
                        assert!(seen.insert(k));
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_reports_the_tail() {
        let mut net = build_uniform(&Topology::Chain { d: 4 }, 3, 3, Fill::SeededRandom(5)).unwrap();
        let cap = TruncationPolicy::MaxRank { max_rank: 2 };
        let (j1, j2, j4) = (id(&net, "j_1"), id(&net, "j_2"), id(&net, "j_4"));
        assert!(move_edge(&mut net, j4, j2, &cap).is_err(), "j_4 and j_2 are not adjacent");
        move_edge(&mut net, j4, j1, &TruncationPolicy::Exact).unwrap();
        let rec = move_edge(&mut net, j4, j2, &cap).unwrap();
        assert_eq!(rec.kept_rank, 2);
        assert!(rec.discarded_mass > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn exact_moves_preserve_the_tensor_and_locality(d in 3usize..7, n in 1usize..4, r in 1usize..4,
                                                        seed in any::<u64>(), start in 0usize..6, right in any::<bool>()) {
            let mut net = build_uniform(&Topology::Chain { d }, n, r, Fill::SeededRandom(seed)).unwrap();
            let before_net = net.clone();
            let before = oracle_contract(&net).unwrap();
            let (_, bonds) = net.ring_order().unwrap();
            let k = start % d;
            let moving = bonds[k];
            let across = if right { bonds[(k + 1) % d] } else { bonds[(k + d - 1) % d] };
            let rec = move_edge(&mut net, moving, across, &TruncationPolicy::Exact).unwrap();
            prop_assert!(net.validate().is_ok());
            prop_assert!(rec.kept_rank <= rec.rank_bound);
            prop_assert!(untouched(&before_net, &net, &rec.nodes));
            prop_assert!(rel(&before, &oracle_contract(&net).unwrap()) < 1e-11);
        }

        #[test]
        fn truncated_moves_are_bounded_by_the_discarded_mass_times_environment(
            d in 4usize..7, seed in any::<u64>(), cap in 1usize..4) {
            // Second step of the ring-to-string conversion, truncated.
            let mut net = build_uniform(&Topology::Chain { d }, 2, 3, Fill::SeededRandom(seed)).unwrap();
            let e1 = id(&net, &format!("j_{d}"));
            let e2 = id(&net, "j_1");
            move_edge(&mut net, e1, e2, &TruncationPolicy::Exact).unwrap();
            let before = oracle_contract(&net).unwrap();
            let patch = plan_move_edge(&net, id(&net, &format!("j_{d}")), id(&net, "j_2"),
                                       &TruncationPolicy::MaxRank { max_rank: cap }).unwrap();
            let env = crate::verify::environment_norm(&net, (NodeId(2), NodeId(3))).unwrap();
            let rec = apply(&mut net, patch);
            let after = oracle_contract(&net).unwrap().permuted(before.labels()).unwrap();
            let err: f64 = before.data().iter().zip(after.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            prop_assert!(err <= env * rec.discarded_mass * (1.0 + 1e-10) + 1e-13 * before.frobenius_norm());
        }
    }
}

//! Ground truth for conversions.
//!
//! * [`oracle_contract`] evaluates the full tensor (desk scale only).
//! * [`inner_product`] sweeps transfer operators along string and ring
//!   layouts, linear in the number of nodes.
//! * [`environment_norm`] and [`ErrorBudget`] implement the per-step
//!   truncation bound `‖v − ṽ‖ ≤ ‖environment‖_F · ‖A − Ã‖_F`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{NodeId, TensorNetwork};
use crate::tensor::{contract, DenseTensor};

/// Largest full tensor the oracle will build, in entries.
pub const DEFAULT_ORACLE_CAP: usize = 1 << 20;

/// Intermediates may exceed the output by this factor before the oracle gives up.
const INTERMEDIATE_SLACK: usize = 64;

fn shared_labels(a: &DenseTensor, b: &DenseTensor) -> Vec<String> {
    a.labels().iter().filter(|l| b.has_label(l)).cloned().collect()
}

fn physical_order(net: &TensorNetwork) -> Vec<String> {
    net.physical_modes().into_iter().map(|(_, p)| p.label).collect()
}

fn check_cap(net: &TensorNetwork, cap: usize) -> Result<()> {
    let size = net.full_size();
    if size > cap {
        return Err(Error::Unsupported(format!(
            "full tensor has {size} entries, above the oracle cap of {cap}"
        )));
    }
    Ok(())
}

/// Full tensor of `net`, modes ordered by node id. Contracts pairwise, always
/// choosing the connected pair with the smallest result.
pub fn oracle_contract(net: &TensorNetwork) -> Result<DenseTensor> {
    oracle_contract_with_cap(net, DEFAULT_ORACLE_CAP)
}

pub fn oracle_contract_with_cap(net: &TensorNetwork, cap: usize) -> Result<DenseTensor> {
    check_cap(net, cap)?;
    let mut pool: Vec<DenseTensor> = net.nodes().map(|(_, t)| t.clone()).collect();
    if pool.is_empty() {
        return Err(invalid("network has no nodes"));
    }
    let limit = cap.saturating_mul(INTERMEDIATE_SLACK);
    while pool.len() > 1 {
        let mut best: Option<(bool, usize, usize, usize)> = None;
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                let shared = shared_labels(&pool[i], &pool[j]);
                let size = result_size(&pool[i], &pool[j], &shared);
                // Prefer connected pairs; outer products only when forced.
                let key = (shared.is_empty(), size, i, j);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        let (_, size, i, j) = best.expect("at least two tensors");
        if size > limit {
            return Err(Error::Unsupported(format!(
                "oracle intermediate of {size} entries exceeds {limit}"
            )));
        }
        let b = pool.swap_remove(j);
        let a = pool.swap_remove(i);
        let shared = shared_labels(&a, &b);
        pool.push(contract(&a, &b, &shared)?);
    }
    let full = pool.pop().expect("one tensor left");
    full.permuted(&physical_order(net))
}

fn result_size(a: &DenseTensor, b: &DenseTensor, shared: &[String]) -> usize {
    a.labels()
        .iter()
        .zip(a.shape())
        .chain(b.labels().iter().zip(b.shape()))
        .filter(|(l, _)| !shared.contains(l))
        .fold(1usize, |acc, (_, e)| acc.saturating_mul(*e))
}

/// Full tensor of `net` contracted strictly in the given node order.
pub fn oracle_contract_ordered(net: &TensorNetwork, order: &[NodeId]) -> Result<DenseTensor> {
    check_cap(net, DEFAULT_ORACLE_CAP)?;
    let ids: BTreeSet<NodeId> = net.node_ids().collect();
    let given: BTreeSet<NodeId> = order.iter().copied().collect();
    if ids != given || order.len() != ids.len() {
        return Err(invalid("order must list every node exactly once"));
    }
    let mut acc = net.tensor(order[0]).expect("listed node").clone();
    for id in &order[1..] {
        let t = net.tensor(*id).expect("listed node");
        let shared = shared_labels(&acc, t);
        acc = contract(&acc, t, &shared)?;
    }
    acc.permuted(&physical_order(net))
}

/// Nodes of a string or ring network in sweep order.
fn sweep_order(net: &TensorNetwork) -> Option<Vec<NodeId>> {
    net.string_order()
        .or_else(|| net.ring_order())
        .map(|(nodes, _)| nodes)
        .or_else(|| (net.node_count() == 1).then(|| net.node_ids().collect()))
}

fn prefixed(t: &DenseTensor, net: &TensorNetwork, node: NodeId, prefix: &str) -> Result<DenseTensor> {
    let mut out = t.clone();
    for b in net.incident(node) {
        out.relabel(&b.label, &format!("{prefix}{}", b.label))?;
    }
    Ok(out)
}

/// `x · e^scale`; keeps long sweeps clear of overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn value(self) -> f64 {
        self.mantissa * self.log_scale.exp()
    }
}

fn renormalize(t: DenseTensor, log_scale: &mut f64) -> DenseTensor {
    let norm = t.frobenius_norm();
    if norm > 0.0 && norm.is_finite() {
        *log_scale += norm.ln();
        t.scaled(1.0 / norm)
    } else {
        t
    }
}

/// `⟨a, b⟩` over matching physical labels, with scale tracking.
///
/// `a` must be a string or a ring; `b` may be either. Nodes of `b` are
/// visited in the order their physical modes appear along `a`.
pub fn inner_product_scaled(a: &TensorNetwork, b: &TensorNetwork) -> Result<Scaled> {
    let order = sweep_order(a).ok_or_else(|| {
        Error::Unsupported(format!("inner products need a string or ring layout, got {}", a.topology()))
    })?;
    if sweep_order(b).is_none() {
        return Err(Error::Unsupported(format!(
            "inner products need a string or ring layout, got {}",
            b.topology()
        )));
    }
    let modes = |net: &TensorNetwork| -> BTreeMap<String, (NodeId, usize)> {
        net.physical_modes().into_iter().map(|(n, p)| (p.label, (n, p.dim))).collect()
    };
    let (ma, mb) = (modes(a), modes(b));
    let dims = |m: &BTreeMap<String, (NodeId, usize)>| m.iter().map(|(l, v)| (l.clone(), v.1)).collect::<Vec<_>>();
    if dims(&ma) != dims(&mb) {
        return Err(invalid("networks do not share the same physical modes"));
    }

    let mut env = DenseTensor::scalar(1.0);
    let mut log_scale = 0.0;
    let mut seen_b = BTreeSet::new();
    for node in order {
        let ket = prefixed(a.tensor(node).expect("node in order"), a, node, "ket:")?;
        let shared = shared_labels(&env, &ket);
        env = contract(&env, &ket, &shared)?;
        for p in a.physical(node) {
            let (bn, _) = mb[&p.label];
            if !seen_b.insert(bn) {
                continue;
            }
            let bra = prefixed(b.tensor(bn).expect("node of b"), b, bn, "bra:")?;
            let shared = shared_labels(&env, &bra);
            env = contract(&env, &bra, &shared)?;
        }
        env = renormalize(env, &mut log_scale);
    }
    if env.order() != 0 {
        return Err(invalid("physical modes of the two networks do not pair up node by node"));
    }
    Ok(Scaled { mantissa: env.data()[0], log_scale })
}

/// `⟨a, b⟩`; see [`inner_product_scaled`].
pub fn inner_product(a: &TensorNetwork, b: &TensorNetwork) -> Result<f64> {
    inner_product_scaled(a, b).map(Scaled::value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    InnerProduct,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    pub value: f64,
    pub method: ErrorMethod,
    /// The expanded form `1 − 2⟨a,b⟩/⟨a,a⟩ + ⟨b,b⟩/⟨a,a⟩` came out slightly
    /// negative from cancellation and was reported as 0.
    pub clamped: bool,
    /// Smallest error the method can resolve: `sqrt` of the clamp tolerance
    /// for inner products, accumulated rounding for the oracle.
    pub resolution: f64,
}

/// Resolution of an oracle comparison over `nodes` contracted tensors.
pub fn oracle_resolution(nodes: usize) -> f64 {
    1e3 * f64::EPSILON * nodes.max(1) as f64
}

/// Negative radicands down to this value (relative to `⟨a,a⟩`, per node) are
/// taken as rounding noise.
pub const CLAMP_TOLERANCE: f64 = 1e-14;

/// `‖a − b‖ / ‖a‖` from three inner products.
pub fn relative_error_inner(a: &TensorNetwork, b: &TensorNetwork) -> Result<RelativeError> {
    let aa = inner_product_scaled(a, a)?;
    let ab = inner_product_scaled(a, b)?;
    let bb = inner_product_scaled(b, b)?;
    if aa.mantissa <= 0.0 {
        return Err(Error::Numerical("reference network has zero norm".into()));
    }
    let ratio = |x: Scaled| x.mantissa / aa.mantissa * (x.log_scale - aa.log_scale).exp();
    let radicand = 1.0 - 2.0 * ratio(ab) + ratio(bb);
    let tolerance = CLAMP_TOLERANCE * a.node_count().max(b.node_count()) as f64;
    if radicand < -tolerance {
        return Err(Error::Numerical(format!(
            "relative error radicand {radicand:e} is below the rounding tolerance {tolerance:e}"
        )));
    }
    Ok(RelativeError {
        value: radicand.max(0.0).sqrt(),
        method: ErrorMethod::InnerProduct,
        clamped: radicand < 0.0,
        resolution: tolerance.sqrt(),
    })
}

/// `‖a − b‖ / ‖a‖` from the full tensors, matched by physical label.
pub fn relative_error_oracle(a: &TensorNetwork, b: &TensorNetwork) -> Result<RelativeError> {
    let ta = oracle_contract(a)?;
    let tb = oracle_contract(b)?;
    Ok(RelativeError {
        value: tensor_relative_error(&ta, &tb)?,
        method: ErrorMethod::Oracle,
        clamped: false,
        resolution: oracle_resolution(a.node_count().max(b.node_count())),
    })
}

/// `‖a − b‖ / ‖a‖` for tensors with the same labels in any order.
pub fn tensor_relative_error(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    let b = b.permuted(a.labels())?;
    if a.shape() != b.shape() {
        return Err(invalid("tensors have different shapes"));
    }
    let diff: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let num = crate::tensor::norm2(&diff);
    let den = a.frobenius_norm();
    if den == 0.0 {
        return Err(Error::Numerical("reference tensor has zero norm".into()));
    }
    Ok(num / den)
}

/// Inner products when both layouts allow them, otherwise the oracle.
pub fn relative_error_detailed(a: &TensorNetwork, b: &TensorNetwork) -> Result<RelativeError> {
    if sweep_order(a).is_some() && sweep_order(b).is_some() {
        return relative_error_inner(a, b);
    }
    if a.full_size() <= DEFAULT_ORACLE_CAP && b.full_size() <= DEFAULT_ORACLE_CAP {
        return relative_error_oracle(a, b);
    }
    Err(Error::Unsupported(format!(
        "no error method for {} vs {} above the oracle cap",
        a.topology(),
        b.topology()
    )))
}

pub fn relative_error(a: &TensorNetwork, b: &TensorNetwork) -> Result<f64> {
    relative_error_detailed(a, b).map(|e| e.value)
}

/// Frobenius norm of the network with the pair `excluded` removed and every
/// bond to the pair left open.
///
/// Computed as `sqrt(⟨E, E⟩)` over a doubled copy, one connected component
/// of the remainder at a time; components multiply.
pub fn environment_norm(net: &TensorNetwork, excluded: (NodeId, NodeId)) -> Result<f64> {
    environment_log_norm(net, excluded).map(f64::exp)
}

/// Natural logarithm of [`environment_norm`].
pub fn environment_log_norm(net: &TensorNetwork, excluded: (NodeId, NodeId)) -> Result<f64> {
    EnvironmentCache::default().log_norm(net, excluded)
}

struct SweepEntry {
    node: NodeId,
    tensor: DenseTensor,
    internal: Vec<String>,
    env: DenseTensor,
    log_scale: f64,
}

type Sweep = Vec<Rc<SweepEntry>>;

/// Partial doubled contractions kept between environment evaluations.
///
/// A sweep whose leading nodes carry the same tensors and the same open
/// bonds as a cached sweep resumes from the cached state, so a sequence of
/// steps that each change two neighbouring tensors costs time proportional
/// to the changed part instead of the whole remainder.
#[derive(Default)]
pub struct EnvironmentCache {
    sweeps: Vec<Sweep>,
    previous: Vec<Sweep>,
}

impl EnvironmentCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same value as [`environment_norm`].
    pub fn norm(&mut self, net: &TensorNetwork, excluded: (NodeId, NodeId)) -> Result<f64> {
        self.log_norm(net, excluded).map(f64::exp)
    }

    /// Same value as [`environment_log_norm`].
    pub fn log_norm(&mut self, net: &TensorNetwork, excluded: (NodeId, NodeId)) -> Result<f64> {
        let (x, y) = excluded;
        for n in [x, y] {
            if net.tensor(n).is_none() {
                return Err(invalid(format!("unknown node {n}")));
            }
        }
        let rest: BTreeSet<NodeId> = net.node_ids().filter(|n| *n != x && *n != y).collect();
        let mut log_norm = 0.0;
        let mut visited = BTreeSet::new();
        let mut fresh = Vec::new();
        for &seed in &rest {
            if visited.contains(&seed) {
                continue;
            }
            let members = bfs(net, &rest, seed);
            visited.extend(members.iter().copied());
            let starts = self.starts(net, &rest, &members);
            let best = starts.iter().max_by_key(|(_, reused)| reused.len()).expect("a start").1.len();
            // With nothing cached, sweep from every candidate end so that
            // whichever end stays fixed in later calls finds a prefix.
            let chosen: Vec<_> = if best == 0 {
                starts
            } else {
                let i = starts.iter().position(|(_, r)| r.len() == best).expect("best start");
                vec![starts.into_iter().nth(i).expect("best start")]
            };
            let mut value = None;
            for (order, reused) in chosen {
                let sweep = doubled_sweep(net, &rest, &order, reused)?;
                let last = sweep.last().expect("nonempty component");
                value.get_or_insert(closed_log(&last.env, last.log_scale)?);
                fresh.push(sweep);
            }
            log_norm += 0.5 * value.expect("one sweep");
        }
        let older = std::mem::replace(&mut self.sweeps, fresh);
        self.previous = older;
        Ok(log_norm)
    }

    /// BFS orders from the lowest-degree nodes of a component, each with
    /// the longest cached prefix it can resume from.
    fn starts(&self, net: &TensorNetwork, rest: &BTreeSet<NodeId>, members: &[NodeId]) -> Vec<(Vec<NodeId>, Sweep)> {
        let degree = |n: NodeId| net.neighbors(n).iter().filter(|m| rest.contains(m)).count();
        let min = members.iter().map(|n| degree(*n)).min().expect("nonempty component");
        let mut starts: Vec<NodeId> = members.iter().copied().filter(|n| degree(*n) == min).collect();
        starts.sort();
        starts
            .into_iter()
            .map(|start| {
                let order = bfs(net, rest, start);
                let reused = self.matching_prefix(net, rest, &order);
                (order, reused)
            })
            .collect()
    }

    fn matching_prefix(&self, net: &TensorNetwork, rest: &BTreeSet<NodeId>, order: &[NodeId]) -> Sweep {
        let mut best: Sweep = Vec::new();
        for sweep in self.sweeps.iter().chain(&self.previous) {
            let mut len = 0;
            for (entry, &node) in sweep.iter().zip(order) {
                if entry.node != node
                    || entry.internal != internal_labels(net, rest, node)
                    || &entry.tensor != net.tensor(node).expect("node of network")
                {
                    break;
                }
                len += 1;
            }
            if len > best.len() {
                best = sweep[..len].to_vec();
            }
        }
        best
    }
}

/// Incident bonds of `node` whose other end is in the remainder.
fn internal_labels(net: &TensorNetwork, rest: &BTreeSet<NodeId>, node: NodeId) -> Vec<String> {
    let mut labels: Vec<String> = net
        .incident(node)
        .filter(|b| b.other(node).is_some_and(|m| rest.contains(&m)))
        .map(|b| b.label.clone())
        .collect();
    labels.sort();
    labels
}

fn bfs(net: &TensorNetwork, rest: &BTreeSet<NodeId>, from: NodeId) -> Vec<NodeId> {
    let mut seen = BTreeSet::from([from]);
    let mut order = vec![from];
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        for m in net.neighbors(n) {
            if rest.contains(&m) && seen.insert(m) {
                order.push(m);
                queue.push_back(m);
            }
        }
    }
    order
}

/// Continues the doubled contraction of `order` after the `reused` prefix.
fn doubled_sweep(net: &TensorNetwork, rest: &BTreeSet<NodeId>, order: &[NodeId], reused: Sweep) -> Result<Sweep> {
    let (mut env, mut log_scale) = match reused.last() {
        Some(e) => (e.env.clone(), e.log_scale),
        None => (DenseTensor::scalar(1.0), 0.0),
    };
    let mut sweep = reused;
    for &node in &order[sweep.len()..] {
        let t = net.tensor(node).expect("node of network");
        let internal = internal_labels(net, rest, node);
        let mut ket = t.clone();
        let mut bra = t.clone();
        // Bonds inside the remainder get one copy per layer; bonds to the
        // excluded pair and physical modes are shared and summed.
        for l in &internal {
            ket.relabel(l, &format!("ket:{l}"))?;
            bra.relabel(l, &format!("bra:{l}"))?;
        }
        let shared = shared_labels(&env, &ket);
        env = contract(&env, &ket, &shared)?;
        let shared = shared_labels(&env, &bra);
        env = contract(&env, &bra, &shared)?;
        env = renormalize(env, &mut log_scale);
        sweep.push(Rc::new(SweepEntry { node, tensor: t.clone(), internal, env: env.clone(), log_scale }));
    }
    Ok(sweep)
}

fn closed_log(env: &DenseTensor, log_scale: f64) -> Result<f64> {
    if env.order() != 0 {
        return Err(Error::Numerical("doubled environment did not close".into()));
    }
    let value = env.data()[0];
    if value <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(value.ln() + log_scale)
}

/// One term of the cumulative truncation bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub step: usize,
    pub env_norm: f64,
    pub discarded_mass: f64,
    pub bound: f64,
}

/// Per-step bounds `env_norm · discarded_mass`, summed by the triangle
/// inequality. All values are absolute (not relative to `‖v‖`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub entries: Vec<BudgetEntry>,
    pub cumulative: f64,
}

impl ErrorBudget {
    pub fn push(&mut self, step: usize, env_norm: f64, discarded_mass: f64) {
        let bound = env_norm * discarded_mass;
        self.cumulative += bound;
        self.entries.push(BudgetEntry { step, env_norm, discarded_mass, bound });
    }

    pub fn cumulative_bound(&self) -> f64 {
        self.cumulative
    }
}

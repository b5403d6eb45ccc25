//! Conversion schedules and their symbolic rank bounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{NodeId, TensorNetwork, Topology};

/// Which conversion a schedule performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conversion {
    TcToTt,
    TtToTc,
    PepsToTt,
}

/// How the center bond of a string is factored before it is closed into a ring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankSplitStrategy {
    /// `r_d = ⌈√r⌉`, `r̃ = ⌈r / r_d⌉`.
    #[default]
    Balanced,
    /// Closing rank `r_d` as given, `r̃ = ⌈r / r_d⌉`.
    Fixed { r_d: usize },
}

impl RankSplitStrategy {
    /// `(r_d, r̃)` for a bond of rank `r`.
    pub fn split(self, r: usize) -> Result<(usize, usize)> {
        let r_d = match self {
            RankSplitStrategy::Balanced => {
                let mut s = (r as f64).sqrt().floor() as usize;
                while s * s < r {
                    s += 1;
                }
                s.max(1)
            }
            RankSplitStrategy::Fixed { r_d } => {
                if r_d == 0 {
                    return Err(invalid("closing rank must be positive"));
                }
                r_d
            }
        };
        Ok((r_d, r.div_ceil(r_d)))
    }
}

/// One operation of a schedule, addressed by bond labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Move { moving: String, across: String },
    Merge { keep: String, absorb: String },
    Insert { bond: String, new_label: String, r_d: usize, r_tilde: usize },
}

/// Independent op sequences. Lanes of one stage touch disjoint node sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub lanes: Vec<Vec<Op>>,
}

/// A conversion as stages run in order.
///
/// Run sequentially, each lane completes before the next starts. Run in
/// parallel, the lanes of a stage advance in lockstep rounds. Ops of
/// different lanes commute, so both orders give the same network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub conversion: Conversion,
    pub stages: Vec<Stage>,
}

impl Schedule {
    /// Ops in sequential order.
    pub fn ops(&self) -> impl Iterator<Item = &Op> {
        self.stages.iter().flat_map(|s| s.lanes.iter().flatten())
    }

    /// Lockstep rounds: the `t`-th op of every lane of a stage.
    pub fn rounds(&self) -> Vec<Vec<&Op>> {
        let mut rounds = Vec::new();
        for stage in &self.stages {
            let len = stage.lanes.iter().map(Vec::len).max().unwrap_or(0);
            for t in 0..len {
                rounds.push(stage.lanes.iter().filter_map(|l| l.get(t)).collect());
            }
        }
        rounds
    }

    pub fn svd_count(&self) -> usize {
        self.ops().filter(|o| !matches!(o, Op::Insert { .. })).count()
    }
}

fn label_of(net: &TensorNetwork, id: crate::network::EdgeId) -> String {
    net.bond(id).expect("bond of order").label.clone()
}

fn stage(lanes: Vec<Vec<Op>>) -> Stage {
    Stage { lanes: lanes.into_iter().filter(|l| !l.is_empty()).collect() }
}

/// Builds the schedule converting `net` as `conversion` prescribes.
pub fn schedule(net: &TensorNetwork, conversion: Conversion, split: RankSplitStrategy) -> Result<Schedule> {
    let stages = match conversion {
        Conversion::TcToTt => {
            let (nodes, bonds) = net.ring_order().ok_or_else(|| wrong_shape(net, "a ring"))?;
            let d = nodes.len();
            let b: Vec<String> = bonds.iter().map(|e| label_of(net, *e)).collect();
            let c = d.div_ceil(2);
            let moving = b[d - 1].clone();
            // b[k-1] is the bond between node k and node k+1.
            let left = (1..c)
                .map(|k| Op::Move { moving: moving.clone(), across: b[k - 1].clone() })
                .collect();
            let right = (1..d - c)
                .map(|k| Op::Move { moving: moving.clone(), across: b[d - k - 1].clone() })
                .collect();
            let merge = Op::Merge { keep: b[c - 1].clone(), absorb: moving };
            vec![stage(vec![left, right]), stage(vec![vec![merge]])]
        }
        Conversion::TtToTc => {
            let (nodes, bonds) = net.string_order().ok_or_else(|| wrong_shape(net, "a string"))?;
            let d = nodes.len();
            if d < 3 {
                return Err(invalid("a ring needs at least 3 nodes"));
            }
            let b: Vec<String> = bonds.iter().map(|e| label_of(net, *e)).collect();
            let c = d.div_ceil(2);
            let center = &b[c - 1];
            let rank = net.bond_by_label(center).expect("center bond").rank;
            let (r_d, r_tilde) = split.split(rank)?;
            let new_label = net.fresh_label(&format!("j_{d}"));
            let insert = Op::Insert { bond: center.clone(), new_label: new_label.clone(), r_d, r_tilde };
            let right = (c + 1..d)
                .map(|k| Op::Move { moving: new_label.clone(), across: b[k - 1].clone() })
                .collect();
            let left = (1..c)
                .rev()
                .map(|k| Op::Move { moving: new_label.clone(), across: b[k - 1].clone() })
                .collect();
            vec![stage(vec![vec![insert]]), stage(vec![right, left])]
        }
        Conversion::PepsToTt => {
            let g = net.grid_layout().ok_or_else(|| wrong_shape(net, "a grid"))?;
            let (rows, cols) = (g.rows, g.cols);
            let h = |r: usize, c: usize| label_of(net, g.horizontal(r, c));
            let v = |r: usize, c: usize| label_of(net, g.vertical(r, c));
            let pair_ops = |p: usize| -> Vec<Op> {
                let mut ops = Vec::new();
                if p % 2 == 0 {
                    for c in 0..cols - 1 {
                        ops.push(Op::Move { moving: v(p, c), across: h(p, c) });
                        ops.push(Op::Move { moving: v(p, c), across: h(p + 1, c) });
                        ops.push(Op::Merge { keep: v(p, c + 1), absorb: v(p, c) });
                    }
                } else {
                    for c in (1..cols).rev() {
                        ops.push(Op::Move { moving: v(p, c), across: h(p, c - 1) });
                        ops.push(Op::Move { moving: v(p, c), across: h(p + 1, c - 1) });
                        ops.push(Op::Merge { keep: v(p, c - 1), absorb: v(p, c) });
                    }
                }
                ops
            };
            [0, 1]
                .into_iter()
                .map(|parity| stage((0..rows - 1).filter(|p| p % 2 == parity).map(pair_ops).collect()))
                .filter(|s| !s.lanes.is_empty())
                .collect()
        }
    };
    Ok(Schedule { conversion, stages })
}

fn wrong_shape(net: &TensorNetwork, want: &str) -> Error {
    invalid(format!("expected {want}, got {}", net.topology()))
}

/// Picks the conversion for `net` and the requested target layout.
pub fn conversion_for(net: &TensorNetwork, target: Target) -> Result<Conversion> {
    match target {
        Target::Tt if net.ring_order().is_some() => Ok(Conversion::TcToTt),
        Target::Tt if net.grid_layout().is_some() => Ok(Conversion::PepsToTt),
        Target::Tc if net.string_order().is_some() => Ok(Conversion::TtToTc),
        _ => Err(Error::Unsupported(format!("no conversion from {} to {target:?}", net.topology()))),
    }
}

/// Target layout of a conversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Tt,
    Tc,
}

/// Bond structure without tensor data.
#[derive(Clone, Debug)]
pub(crate) struct Skeleton {
    bonds: BTreeMap<String, (NodeId, NodeId, usize)>,
    physical: BTreeMap<NodeId, usize>,
}

/// Shape of one planned SVD.
pub(crate) struct StepShape {
    pub rows: usize,
    pub cols: usize,
    pub bound: usize,
}

impl Skeleton {
    pub fn of(net: &TensorNetwork) -> Skeleton {
        Skeleton {
            bonds: net.bonds().map(|b| (b.label.clone(), (b.a, b.b, b.rank))).collect(),
            physical: net
                .node_ids()
                .map(|n| (n, net.physical(n).iter().map(|p| p.dim).product()))
                .collect(),
        }
    }

    fn bond(&self, label: &str) -> Result<(NodeId, NodeId, usize)> {
        self.bonds.get(label).copied().ok_or_else(|| invalid(format!("unknown bond {label}")))
    }

    fn between(&self, u: NodeId, w: NodeId) -> Vec<String> {
        self.bonds
            .iter()
            .filter(|(_, (a, b, _))| (*a == u && *b == w) || (*a == w && *b == u))
            .map(|(l, _)| l.clone())
            .collect()
    }

    fn incident(&self, n: NodeId) -> Vec<(String, NodeId, usize)> {
        self.bonds
            .iter()
            .filter_map(|(l, (a, b, r))| {
                if *a == n {
                    Some((l.clone(), *b, *r))
                } else if *b == n {
                    Some((l.clone(), *a, *r))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Fuses `u` and `w`, keeps `u`'s remaining modes except `moving` on the
    /// left, and records the bound on the new bond, which replaces every bond
    /// between the pair under label `new_label`.
    fn fuse_split(&mut self, u: NodeId, w: NodeId, moving: Option<&str>, new_label: &str) -> StepShape {
        let between = self.between(u, w);
        let mut rows = self.physical[&u];
        let mut cols = self.physical[&w];
        let mut feeding: usize = 1;
        for l in &between {
            feeding = feeding.saturating_mul(self.bonds[l].2);
        }
        for (l, _, r) in self.incident(u) {
            if between.contains(&l) {
                continue;
            }
            if Some(l.as_str()) == moving {
                cols = cols.saturating_mul(r);
                feeding = feeding.saturating_mul(r);
            } else {
                rows = rows.saturating_mul(r);
            }
        }
        for (l, _, r) in self.incident(w) {
            if !between.contains(&l) {
                cols = cols.saturating_mul(r);
            }
        }
        let bound = rows.min(cols).min(feeding);
        for l in &between {
            self.bonds.remove(l);
        }
        if let Some(m) = moving {
            let e = self.bonds.get_mut(m).expect("moving bond");
            if e.0 == u {
                e.0 = w;
            } else {
                e.1 = w;
            }
        }
        self.bonds.insert(new_label.to_string(), (u, w, bound));
        StepShape { rows, cols, bound }
    }

    /// Applies one operation symbolically. Returns the SVD shape, if any.
    pub fn apply(&mut self, op: &Op) -> Result<Option<StepShape>> {
        match op {
            Op::Move { moving, across } => {
                let (ma, mb, _) = self.bond(moving)?;
                let (xa, xb, _) = self.bond(across)?;
                let u = if ma == xa || ma == xb {
                    ma
                } else if mb == xa || mb == xb {
                    mb
                } else {
                    return Err(invalid(format!("bonds {moving} and {across} are not adjacent")));
                };
                let w = if xa == u { xb } else { xa };
                Ok(Some(self.fuse_split(u, w, Some(moving), across)))
            }
            Op::Merge { keep, absorb } => {
                let (a, b, _) = self.bond(keep)?;
                let (c, e, _) = self.bond(absorb)?;
                if !((a == c && b == e) || (a == e && b == c)) {
                    return Err(invalid(format!("bonds {keep} and {absorb} are not parallel")));
                }
                Ok(Some(self.fuse_split(a, b, None, keep)))
            }
            Op::Insert { bond, new_label, r_d, r_tilde } => {
                let (a, b, _) = self.bond(bond)?;
                self.bonds.insert(bond.clone(), (a, b, *r_tilde));
                self.bonds.insert(new_label.clone(), (a, b, *r_d));
                Ok(None)
            }
        }
    }

    pub fn ranks(&self) -> BTreeMap<String, usize> {
        self.bonds.iter().map(|(l, v)| (l.clone(), v.2)).collect()
    }
}

/// Symbolic bound for one SVD step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepBound {
    pub op: Op,
    pub rows: usize,
    pub cols: usize,
    pub bound: usize,
}

/// Upper bounds on every intermediate and final bond rank of a conversion,
/// valid for any truncation policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankBoundPlan {
    pub conversion: Conversion,
    pub steps: Vec<StepBound>,
    pub final_bounds: BTreeMap<String, usize>,
    pub max_bound: usize,
    /// `Σ m·n·min(m, n)` over the planned SVDs.
    pub cost: f64,
}

/// Walks the schedule symbolically: each new bond gets
/// `min(rows, cols, product of the ranks feeding it)`, computed from the
/// bounds of earlier steps.
pub fn predict_rank_bounds(net: &TensorNetwork, target: Target) -> Result<RankBoundPlan> {
    predict_with(net, target, RankSplitStrategy::default())
}

pub fn predict_with(net: &TensorNetwork, target: Target, split: RankSplitStrategy) -> Result<RankBoundPlan> {
    let conversion = conversion_for(net, target)?;
    let sched = schedule(net, conversion, split)?;
    bounds_of(net, &sched)
}

/// Bounds for an explicit schedule of `net`.
pub fn bounds_of(net: &TensorNetwork, sched: &Schedule) -> Result<RankBoundPlan> {
    let mut sk = Skeleton::of(net);
    let mut steps = Vec::new();
    let mut cost = 0.0;
    for op in sched.ops() {
        if let Some(s) = sk.apply(op)? {
            cost += s.rows as f64 * s.cols as f64 * s.rows.min(s.cols) as f64;
            steps.push(StepBound { op: op.clone(), rows: s.rows, cols: s.cols, bound: s.bound });
        }
    }
    let final_bounds = sk.ranks();
    let max_bound = final_bounds.values().copied().max().unwrap_or(0);
    Ok(RankBoundPlan { conversion: sched.conversion, steps, final_bounds, max_bound, cost })
}

/// Estimated SVD work `Σ m·n·min(m, n)` of a conversion.
pub fn conversion_cost_model(net: &TensorNetwork, target: Target) -> Result<f64> {
    predict_rank_bounds(net, target).map(|p| p.cost)
}

/// Expected topology after a conversion of `net`.
pub fn expected_topology(net: &TensorNetwork, conversion: Conversion) -> Topology {
    let d = net.node_count();
    match conversion {
        Conversion::TcToTt | Conversion::PepsToTt => Topology::Train { d },
        Conversion::TtToTc => Topology::Chain { d },
    }
}

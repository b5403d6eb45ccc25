//! Topology conversions: ring to string, grid to string, string to ring.
//!
//! Every conversion is a fixed [`Schedule`] of bond moves and merges. Steps
//! in one round touch disjoint node pairs, so with
//! [`ConvertOptions::parallel_steps`] they are planned concurrently; each
//! step reads only its own two tensors, so the result does not depend on the
//! mode.

mod plan;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use plan::{
    bounds_of, conversion_cost_model, conversion_for, expected_topology, predict_rank_bounds, predict_with, schedule,
    Conversion, Op, RankBoundPlan, RankSplitStrategy, Schedule, Stage, StepBound, Target,
};

use crate::error::{invalid, Error, Result};
use crate::linalg::TruncationPolicy;
use crate::network::{EdgeId, TensorNetwork, Topology};
use crate::par;
use crate::rewire::{self, IndexPairing, Patch, StepRecord};
use crate::verify::{self, EnvironmentCache, ErrorBudget};

/// Knobs shared by all conversions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvertOptions {
    pub policy: TruncationPolicy,
    /// Plan the steps of one round concurrently.
    pub parallel_steps: bool,
    /// Compute the environment norm before every step that discards mass.
    pub track_error: bool,
    pub split: RankSplitStrategy,
    pub pairing: IndexPairing,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions {
            policy: TruncationPolicy::Exact,
            parallel_steps: false,
            track_error: true,
            split: RankSplitStrategy::Balanced,
            pairing: IndexPairing::OriginalMinor,
        }
    }
}

impl ConvertOptions {
    pub fn with_policy(policy: TruncationPolicy) -> Self {
        ConvertOptions { policy, ..Default::default() }
    }
}

/// Outcome of a conversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub conversion: Conversion,
    pub source: Topology,
    pub target: Topology,
    pub policy: TruncationPolicy,
    pub steps: Vec<StepRecord>,
    pub final_ranks: BTreeMap<String, usize>,
    pub avg_rank: f64,
    pub max_rank: usize,
    /// Sum of the per-step bounds, absolute. `None` when error tracking was off.
    pub cumulative_error_bound: Option<f64>,
    /// `cumulative_error_bound / ‖input‖`, when the input norm is available.
    pub relative_error_bound: Option<f64>,
    pub budget: ErrorBudget,
    pub seconds: f64,
}

impl ConversionReport {
    /// Ranks in bond-label order.
    pub fn ranks(&self) -> Vec<usize> {
        self.final_ranks.values().copied().collect()
    }
}

/// Converts a ring into a string with `d - 1` SVD steps.
pub fn tc_to_tt(net: &TensorNetwork, options: &ConvertOptions) -> Result<(TensorNetwork, ConversionReport)> {
    run(net, Conversion::TcToTt, options)
}

/// Converts a string into a ring with `d - 2` SVD steps.
pub fn tt_to_tc(net: &TensorNetwork, options: &ConvertOptions) -> Result<(TensorNetwork, ConversionReport)> {
    run(net, Conversion::TtToTc, options)
}

/// Converts an `R × C` grid into a snake-ordered string, eliminating
/// `(R-1)(C-1)` bonds with `3(R-1)(C-1)` SVD steps.
pub fn peps_to_tt(net: &TensorNetwork, options: &ConvertOptions) -> Result<(TensorNetwork, ConversionReport)> {
    run(net, Conversion::PepsToTt, options)
}

/// Converts to the requested layout, picking the conversion from the input.
pub fn convert(
    net: &TensorNetwork,
    target: Target,
    options: &ConvertOptions,
) -> Result<(TensorNetwork, ConversionReport)> {
    run(net, conversion_for(net, target)?, options)
}

fn edge(net: &TensorNetwork, label: &str) -> Result<EdgeId> {
    net.bond_by_label(label)
        .map(|b| b.id)
        .ok_or_else(|| invalid(format!("bond {label} vanished during conversion")))
}

fn plan_op(net: &TensorNetwork, op: &Op, policy: &TruncationPolicy) -> Result<Patch> {
    match op {
        Op::Move { moving, across } => rewire::plan_move_edge(net, edge(net, moving)?, edge(net, across)?, policy),
        Op::Merge { keep, absorb } => {
            rewire::plan_merge_parallel(net, edge(net, keep)?, edge(net, absorb)?, policy)
        }
        Op::Insert { .. } => unreachable!("insertions are applied directly"),
    }
}

fn input_log_norm(net: &TensorNetwork) -> Option<f64> {
    if net.string_order().is_some() || net.ring_order().is_some() {
        let s = verify::inner_product_scaled(net, net).ok()?;
        (s.mantissa > 0.0).then(|| 0.5 * (s.mantissa.ln() + s.log_scale))
    } else {
        let t = verify::oracle_contract(net).ok()?;
        let n = t.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 0.0).then(|| n.ln())
    }
}

fn run(
    input: &TensorNetwork,
    conversion: Conversion,
    options: &ConvertOptions,
) -> Result<(TensorNetwork, ConversionReport)> {
    let policy = options.policy.validated()?;
    let start = Instant::now();
    let sched = schedule(input, conversion, options.split)?;
    let source = input.topology();
    let mut net = input.clone();
    let mut steps: Vec<StepRecord> = Vec::with_capacity(sched.svd_count());
    let parallel = options.parallel_steps && par::is_parallel();

    let mut tracker = Tracker { budget: ErrorBudget::default(), cache: EnvironmentCache::new(), on: options.track_error };
    if parallel {
        for round in sched.rounds() {
            if let [Op::Insert { .. }] = round.as_slice() {
                insert(&mut net, round[0], options)?;
                continue;
            }
            let planned = par::map(&round, |op| plan_op(&net, op, &policy));
            for patch in planned {
                tracker.apply(&mut net, patch?, &mut steps)?;
            }
        }
    } else {
        for op in sched.ops() {
            if let Op::Insert { .. } = op {
                insert(&mut net, op, options)?;
                continue;
            }
            let patch = plan_op(&net, op, &policy)?;
            tracker.apply(&mut net, patch, &mut steps)?;
        }
    }
    let budget = tracker.budget;

    let expected = expected_topology(input, conversion);
    let shaped = match conversion {
        Conversion::TtToTc => net.ring_order().is_some(),
        Conversion::TcToTt | Conversion::PepsToTt => net.string_order().is_some(),
    };
    if !shaped {
        return Err(Error::Numerical(format!("conversion produced {}, expected {expected}", net.topology())));
    }

    let final_ranks = net.ranks();
    let max_rank = final_ranks.values().copied().max().unwrap_or(0);
    let avg_rank = if final_ranks.is_empty() {
        0.0
    } else {
        final_ranks.values().sum::<usize>() as f64 / final_ranks.len() as f64
    };
    let (cumulative_error_bound, relative_error_bound) = if !options.track_error {
        (None, None)
    } else if budget.entries.is_empty() {
        (Some(0.0), Some(0.0))
    } else {
        let c = budget.cumulative_bound();
        let rel = input_log_norm(input).map(|ln| (c.ln() - ln).exp());
        (Some(c), rel)
    };
    let report = ConversionReport {
        conversion,
        source,
        target: expected,
        policy,
        steps,
        final_ranks,
        avg_rank,
        max_rank,
        cumulative_error_bound,
        relative_error_bound,
        budget,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((net, report))
}

fn insert(net: &mut TensorNetwork, op: &Op, options: &ConvertOptions) -> Result<()> {
    let Op::Insert { bond, new_label, r_d, r_tilde } = op else {
        unreachable!("only insertions")
    };
    let id = edge(net, bond)?;
    rewire::insert_artificial_edge(net, id, (*r_d, *r_tilde), options.pairing, new_label)?;
    Ok(())
}

/// Applies patches, charging each truncating one to the error budget.
struct Tracker {
    budget: ErrorBudget,
    cache: EnvironmentCache,
    on: bool,
}

impl Tracker {
    fn apply(&mut self, net: &mut TensorNetwork, patch: Patch, steps: &mut Vec<StepRecord>) -> Result<()> {
        if self.on && patch.record().discarded_mass > 0.0 {
            let [u, w] = patch.nodes();
            let env = self.cache.norm(net, (u, w))?;
            self.budget.push(steps.len(), env, patch.record().discarded_mass);
        }
        steps.push(rewire::apply(net, patch));
        Ok(())
    }
}

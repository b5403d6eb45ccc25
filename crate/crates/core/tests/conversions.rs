mod common;

use proptest::prelude::*;

use tnconv::convert::{
    bounds_of, peps_to_tt, schedule, tc_to_tt, tt_to_tc, ConvertOptions, RankSplitStrategy,
};
use tnconv::network::{build_uniform, deserialize, serialize};
use tnconv::rewire::IndexPairing;
use tnconv::{Fill, TensorNetwork, Topology, TruncationPolicy};

fn random(topology: Topology, n: usize, r: usize, seed: u64) -> TensorNetwork {
    build_uniform(&topology, n, r, Fill::SeededRandom(seed)).unwrap()
}

#[test]
fn ring_ranks_for_the_reference_instance() {
    let tc = random(Topology::Chain { d: 4 }, 10, 6, 42);
    let (tt, report) = tc_to_tt(&tc, &ConvertOptions::default()).unwrap();
    assert_eq!(report.ranks(), [10, 36, 10]);
    assert!(common::relative(&tc, &tt) < 1e-12);
}

#[test]
fn rank_one_string_closes_with_rank_one_bonds() {
    let tt = random(Topology::Train { d: 3 }, 2, 1, 0);
    let (tc, report) = tt_to_tc(&tt, &ConvertOptions::default()).unwrap();
    assert!(report.final_ranks.values().all(|r| *r == 1));
    assert!(tc.ring_order().is_some());
    assert!(common::relative(&tt, &tc) < 1e-12);
}

#[test]
fn fixed_split_and_new_minor_pairing_stay_exact() {
    let tt = random(Topology::Train { d: 5 }, 3, 4, 1);
    for split in [RankSplitStrategy::Fixed { r_d: 1 }, RankSplitStrategy::Fixed { r_d: 3 }] {
        for pairing in [IndexPairing::OriginalMinor, IndexPairing::NewMinor] {
            let options = ConvertOptions { split, pairing, ..ConvertOptions::default() };
            let (tc, _) = tt_to_tc(&tt, &options).unwrap();
            assert!(common::relative(&tt, &tc) < 1e-12, "{split:?} {pairing:?}");
        }
    }
}

#[test]
fn converted_networks_round_trip_through_json() {
    let g = random(Topology::Grid { rows: 2, cols: 3 }, 2, 2, 4);
    let (tt, _) = peps_to_tt(&g, &ConvertOptions::default()).unwrap();
    let back = deserialize(&serialize(&tt)).unwrap();
    assert_eq!(back, tt);
}

#[test]
fn max_rank_policy_caps_every_bond() {
    let tc = random(Topology::Chain { d: 7 }, 3, 3, 2);
    let options = ConvertOptions::with_policy(TruncationPolicy::max_rank(2).unwrap());
    let (_, report) = tc_to_tt(&tc, &options).unwrap();
    assert!(report.max_rank <= 2);
    assert!(report.steps.iter().all(|s| s.kept_rank <= 2));
    assert!(report.cumulative_error_bound.unwrap() > 0.0);
}

#[test]
fn disabled_tracking_leaves_no_bound() {
    let tc = random(Topology::Chain { d: 5 }, 3, 3, 2);
    let options = ConvertOptions { track_error: false, ..ConvertOptions::with_policy(TruncationPolicy::max_rank(2).unwrap()) };
    let (_, report) = tc_to_tt(&tc, &options).unwrap();
    assert_eq!(report.cumulative_error_bound, None);
    assert!(report.budget.entries.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_ring_conversion_is_lossless_and_bounded(d in 3usize..7, n in 1usize..4, r in 1usize..4, seed in any::<u64>()) {
        let tc = random(Topology::Chain { d }, n, r, seed);
        let (tt, report) = tc_to_tt(&tc, &ConvertOptions::default()).unwrap();
        prop_assert!(tt.string_order().is_some());
        prop_assert_eq!(report.steps.len(), d - 1);
        let plan = bounds_of(&tc, &schedule(&tc, report.conversion, RankSplitStrategy::Balanced).unwrap()).unwrap();
        for (label, rank) in &report.final_ranks {
            prop_assert!(*rank <= plan.final_bounds[label]);
        }
        let scale: f64 = tc.nodes().map(|(_, t)| t.frobenius_norm()).product();
        let diff = common::distance(&common::full(&tc, &tc), &common::full(&tt, &tc));
        prop_assert!(diff <= 1e-12 * scale);
    }

    #[test]
    fn exact_string_conversion_is_lossless(d in 3usize..7, n in 1usize..4, r in 1usize..4, seed in any::<u64>()) {
        let tt = random(Topology::Train { d }, n, r, seed);
        let (tc, report) = tt_to_tc(&tt, &ConvertOptions::default()).unwrap();
        prop_assert!(tc.ring_order().is_some());
        prop_assert_eq!(report.steps.len(), d - 2);
        let scale: f64 = tt.nodes().map(|(_, t)| t.frobenius_norm()).product();
        let diff = common::distance(&common::full(&tt, &tt), &common::full(&tc, &tt));
        prop_assert!(diff <= 1e-12 * scale);
    }

    #[test]
    fn grid_conversion_removes_the_interior_bonds(rows in 2usize..4, cols in 2usize..4, seed in any::<u64>()) {
        let g = random(Topology::Grid { rows, cols }, 2, 2, seed);
        let (tt, report) = peps_to_tt(&g, &ConvertOptions::default()).unwrap();
        prop_assert_eq!(g.bond_count() - tt.bond_count(), (rows - 1) * (cols - 1));
        prop_assert_eq!(report.steps.len(), 3 * (rows - 1) * (cols - 1));
        prop_assert!(tt.string_order().is_some());
    }

    #[test]
    fn truncated_conversions_respect_their_bound(d in 4usize..7, cap in 1usize..3, seed in any::<u64>()) {
        let tc = random(Topology::Chain { d }, 3, 3, seed);
        let options = ConvertOptions::with_policy(TruncationPolicy::max_rank(cap).unwrap());
        let (tt, report) = tc_to_tt(&tc, &options).unwrap();
        let v = common::full(&tc, &tc);
        let err = common::distance(&v, &common::full(&tt, &tc));
        prop_assert!(err <= report.cumulative_error_bound.unwrap() + 1e-12 * common::norm(&v));
    }
}

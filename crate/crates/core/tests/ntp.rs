use std::collections::BTreeMap;

use ems_core::cases::{self, synthetic_grid};
use ems_core::grid_model::{
    BusBranchGraph, BusId, DeviceParams, GridState, MeasurementSet, NodeBreakerGraph, SnapshotDelta,
};
use ems_core::ntp::{canonicalize, detect_islands, full_ntp, incremental_ntp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_delta(g: &NodeBreakerGraph, t: i64, rng: &mut ChaCha8Rng) -> SnapshotDelta {
    let switches: Vec<usize> = g.switches().collect();
    let mut d = SnapshotDelta::empty(t);
    for _ in 0..rng.random_range(1..=3) {
        let k = switches[rng.random_range(0..switches.len())];
        let dev = g.device(k);
        d.switches.push((dev.id.clone(), dev.switch_status().unwrap().toggled()));
    }
    if rng.random_bool(0.3) {
        let inj: Vec<usize> = (0..g.devices().len())
            .filter(|&k| matches!(g.device(k).params, DeviceParams::Load { .. } | DeviceParams::Generator { .. }))
            .collect();
        let k = inj[rng.random_range(0..inj.len())];
        let (p, q) = (rng.random_range(0..=64) as f64 / 64.0, rng.random_range(-16..=16) as f64 / 64.0);
        d.injections.push((g.device(k).id.clone(), p, q));
    }
    d
}

fn partition(g: &BusBranchGraph) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = g.buses().iter().map(|b| b.members.clone()).collect();
    out.sort();
    out
}

fn ids_by_members(g: &BusBranchGraph) -> BTreeMap<Vec<usize>, BusId> {
    g.buses().iter().map(|b| (b.members.clone(), b.id)).collect()
}

fn check_islands(g: &BusBranchGraph) {
    let (label, energized) = ems_oracles::islands(g, None);
    let expected: Vec<BusId> = label.iter().map(|&p| g.buses()[p].id).collect();
    let got = detect_islands(g);
    assert_eq!(got.label, expected);
    assert_eq!(got.energized, energized);
    assert_eq!(g.islands(), &got);
}

#[test]
fn incremental_matches_full_over_random_toggle_sequences() {
    let mut fallbacks = 0;
    for seq in 0..1000u64 {
        let grid = synthetic_grid(20, seq % 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seq);
        let mut state = GridState::new(0, grid, MeasurementSet::new());
        let mut prev = full_ntp(&state.grid);
        for step in 1..=5 {
            let delta = random_delta(&state.grid, step, &mut rng);
            let changes = state.apply(&delta).unwrap();
            let out = incremental_ntp(&prev, &state.grid, &changes);
            fallbacks += out.fell_back_to_full as usize;
            let full = full_ntp(&state.grid);
            assert_eq!(canonicalize(&out.graph), canonicalize(&full), "sequence {seq} step {step}");
            assert_eq!(partition(&out.graph), ems_oracles::bus_partition(&state.grid));
            assert_eq!(out.graph.total_injection(), ems_oracles::device_injection_total(&state.grid));
            assert_eq!(out.topology_changed, partition(&prev) != partition(&out.graph) || {
                let links = |g: &BusBranchGraph| g.branches().iter().map(|b| (b.id, b.from, b.to, b.status)).collect::<Vec<_>>();
                links(&prev) != links(&out.graph)
            });

            let before = ids_by_members(&prev);
            for (members, id) in ids_by_members(&out.graph) {
                if let Some(old) = before.get(&members) {
                    assert_eq!(*old, id, "bus id changed for an unchanged member set");
                }
            }
            check_islands(&out.graph);
            prev = out.graph;
        }
    }
    assert_eq!(fallbacks, 0);
}

#[test]
fn rebuilds_only_changed_substations() {
    let mut state = GridState::new(0, synthetic_grid(20, 3), MeasurementSet::new());
    let prev = full_ntp(&state.grid);
    let mut d = SnapshotDelta::empty(1);
    d.switches.push(("S4.CPL".into(), ems_core::grid_model::SwitchStatus::Open));
    let changes = state.apply(&d).unwrap();
    let out = incremental_ntp(&prev, &state.grid, &changes);
    assert_eq!(out.rebuilt_substations.into_iter().collect::<Vec<_>>(), vec![4]);
    // every bay sits on BB1, so the coupler opening leaves BB2 as a bare busbar bus
    assert!(out.topology_changed);
    assert_eq!(out.graph.buses().len(), prev.buses().len() + 1);
}

#[test]
fn empty_change_set_returns_previous_graph() {
    let mut state = GridState::new(0, synthetic_grid(12, 5), MeasurementSet::new());
    let prev = full_ntp(&state.grid);
    let changes = state.apply(&SnapshotDelta::empty(1)).unwrap();
    let out = incremental_ntp(&prev, &state.grid, &changes);
    assert!(!out.topology_changed && !out.fell_back_to_full);
    assert!(out.rebuilt_substations.is_empty());
    assert_eq!(out.graph, prev);
}

#[test]
fn stale_change_set_falls_back_to_full() {
    let mut state = GridState::new(0, synthetic_grid(12, 5), MeasurementSet::new());
    let prev = full_ntp(&state.grid);
    let mut d = SnapshotDelta::empty(1);
    d.switches.push(("S3.LD.CB".into(), ems_core::grid_model::SwitchStatus::Open));
    state.apply(&d).unwrap();
    let out = incremental_ntp(&prev, &state.grid, &Default::default());
    assert!(out.fell_back_to_full && out.topology_changed);
    assert_eq!(canonicalize(&out.graph), canonicalize(&full_ntp(&state.grid)));
}

#[test]
fn ieee_node_breaker_partitions_match_oracle() {
    for case in [cases::ieee14(), cases::ieee30(), cases::ieee118()] {
        let nb = case.node_breaker().unwrap();
        let g = full_ntp(&nb);
        assert_eq!(partition(&g), ems_oracles::bus_partition(&nb));
        let (p, q) = ems_oracles::device_injection_total(&nb);
        let (gp, gq) = g.total_injection();
        assert!((p - gp).abs() < 1e-9 && (q - gq).abs() < 1e-9);
        check_islands(&g);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_and_conservation_hold_for_arbitrary_switch_states(
        seed in 0u64..50,
        n in 3usize..16,
        flips in proptest::collection::vec(any::<prop::sample::Index>(), 0..40),
    ) {
        let mut g = synthetic_grid(n, seed);
        let switches: Vec<usize> = g.switches().collect();
        for f in flips {
            let k = switches[f.index(switches.len())];
            let s = g.device(k).switch_status().unwrap().toggled();
            g.set_switch(k, s).unwrap();
        }
        let bb = full_ntp(&g);
        prop_assert_eq!(partition(&bb), ems_oracles::bus_partition(&g));
        prop_assert_eq!(bb.total_injection(), ems_oracles::device_injection_total(&g));
        let (label, energized) = ems_oracles::islands(&bb, None);
        let expected: Vec<BusId> = label.iter().map(|&p| bb.buses()[p].id).collect();
        prop_assert_eq!(&bb.islands().label, &expected);
        prop_assert_eq!(&bb.islands().energized, &energized);
    }
}

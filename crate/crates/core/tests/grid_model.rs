use ems_core::cases::{self, full_measurement_set, synthetic_grid};
use ems_core::grid_model::{
    build_admittance, DeviceParams, EvolvingSequence, GridModelError, GridState, NodeBreakerGraph, SnapshotDelta,
};
use ems_core::ntp::full_ntp;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_delta(state: &GridState, t: i64, rng: &mut ChaCha8Rng) -> SnapshotDelta {
    let g = &state.grid;
    let switches: Vec<usize> = g.switches().collect();
    let mut d = SnapshotDelta::empty(t);
    for _ in 0..rng.random_range(0..3) {
        let dev = g.device(switches[rng.random_range(0..switches.len())]);
        let s = if rng.random_bool(0.5) { dev.switch_status().unwrap().toggled() } else { dev.switch_status().unwrap() };
        d.switches.push((dev.id.clone(), s));
    }
    for _ in 0..rng.random_range(0..4) {
        let m = &state.measurements.defs()[rng.random_range(0..state.measurements.len())];
        d.measurements.push((m.id.clone(), rng.random_range(-1.0..1.0)));
    }
    if rng.random_bool(0.3) {
        let load = injection_devices(g)[0];
        d.injections.push((g.device(load).id.clone(), rng.random_range(0.0..1.0), 0.0));
    }
    d
}

fn injection_devices(g: &NodeBreakerGraph) -> Vec<usize> {
    (0..g.devices().len())
        .filter(|&k| matches!(g.device(k).params, DeviceParams::Load { .. } | DeviceParams::Generator { .. }))
        .collect()
}

#[test]
fn replay_reproduces_incrementally_maintained_head() {
    let grid = synthetic_grid(15, 4);
    let meas = full_measurement_set(&grid);
    let mut seq: EvolvingSequence = EvolvingSequence::new(GridState::new(0, grid, meas));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut heads = vec![seq.head().clone()];
    for k in 0..100 {
        // repeated timestamps are allowed
        let t = 10 * k + rng.random_range(0..2);
        let d = random_delta(seq.head(), t.max(seq.head().t), &mut rng);
        seq.apply_delta(d).unwrap();
        heads.push(seq.head().clone());
    }
    assert_eq!(&seq.replay(100).unwrap(), seq.head());
    for k in [0, 1, 37, 99] {
        assert_eq!(seq.replay(k).unwrap(), heads[k]);
    }
    assert_eq!(seq.base(), &heads[0]);
}

#[test]
fn rejected_delta_leaves_state_untouched() {
    let grid = synthetic_grid(5, 1);
    let mut state = GridState::new(10, grid.clone(), full_measurement_set(&grid));
    let before = state.clone();
    let mut d = SnapshotDelta::empty(20);
    d.switches.push(("S1.CPL".into(), ems_core::grid_model::SwitchStatus::Open));
    d.injections.push(("S1.LD".into(), 9.0, 9.0));
    d.measurements.push(("nope".into(), 1.0));
    assert!(matches!(state.apply(&d), Err(GridModelError::UnknownMeasurement(_))));
    assert_eq!(state, before);

    let mut d = SnapshotDelta::empty(20);
    d.switches.push(("S1.LD".into(), ems_core::grid_model::SwitchStatus::Open));
    assert!(matches!(state.apply(&d), Err(GridModelError::NotASwitch(_))));
    let mut d = SnapshotDelta::empty(20);
    d.injections.push(("S1.CPL".into(), 0.0, 0.0));
    assert!(matches!(state.apply(&d), Err(GridModelError::NotAnInjection(_))));
    assert!(matches!(state.apply(&SnapshotDelta::empty(5)), Err(GridModelError::NonMonotoneTimestamp { .. })));
    assert_eq!(state, before);
}

#[test]
fn toggling_twice_in_one_delta_is_no_change() {
    let grid = synthetic_grid(5, 1);
    let mut state = GridState::new(0, grid, Default::default());
    let mut d = SnapshotDelta::empty(1);
    d.switches.push(("S2.CPL".into(), ems_core::grid_model::SwitchStatus::Open));
    d.switches.push(("S2.CPL".into(), ems_core::grid_model::SwitchStatus::Closed));
    let changes = state.apply(&d).unwrap();
    assert!(changes.switches.is_empty() && changes.topology_substations.is_empty());
}

fn max_abs(m: &nalgebra::DMatrix<num_complex::Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn admittance_of_fixtures_is_symmetric_matching_dense_builder() {
    for case in [cases::ieee14(), cases::ieee30(), cases::ieee118()] {
        let g = case.bus_branch().unwrap();
        let y = build_admittance(&g).unwrap();
        let dense = ems_oracles::dense_ybus(&g);
        let mut rebuilt = nalgebra::DMatrix::from_element(y.n(), y.n(), num_complex::Complex64::new(0.0, 0.0));
        for (r, c, v) in y.triplets() {
            rebuilt[(r, c)] += v;
        }
        assert!(max_abs(&(&rebuilt - &dense)) < 1e-9);
        // only off-nominal taps break symmetry
        let tapped = g.branches().iter().any(|b| b.tap != 1.0);
        if !tapped {
            assert!(max_abs(&(&rebuilt - rebuilt.transpose())) < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn admittance_is_symmetric_without_taps(seed in 0u64..1000, n in 2usize..20) {
        let g = full_ntp(&synthetic_grid(n, seed));
        let y = build_admittance(&g).unwrap();
        let mut t: Vec<_> = y.triplets();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut tt: Vec<_> = t.iter().map(|&(r, c, v)| (c, r, v)).collect();
        tt.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        prop_assert_eq!(t, tt);
    }

    #[test]
    fn injection_updates_are_counted_once(seed in 0u64..100, p in 0.0f64..2.0) {
        let grid = synthetic_grid(6, seed);
        let load = injection_devices(&grid)[0];
        let id = grid.device(load).id.clone();
        let mut state = GridState::new(0, grid, Default::default());
        let mut d = SnapshotDelta::empty(1);
        d.injections.push((id, p, 0.0));
        let changes = state.apply(&d).unwrap();
        prop_assert!(changes.injection_substations.len() <= 1);
        prop_assert!(changes.switches.is_empty());
    }
}

use std::time::Instant;

use ems_core::cases;
use ems_core::grid_model::{BusBranchGraph, StateVector};
use ems_core::powerflow::{branch_flows, build_decoupled, compute_mismatch, fdpf_solve, PowerFlowResult};
use proptest::prelude::*;

fn solve(g: &BusBranchGraph) -> PowerFlowResult {
    fdpf_solve(&build_decoupled(g).unwrap(), g, None).unwrap()
}

#[test]
fn decoupled_matrices_match_dense_builder_on_ieee14() {
    let g = cases::ieee14().bus_branch().unwrap();
    let sys = build_decoupled(&g).unwrap();
    let bp = ems_oracles::dense(sys.b_prime.as_ref().unwrap());
    let bpp = ems_oracles::dense(sys.b_double.as_ref().unwrap());
    assert!((bp - ems_oracles::dense_b_prime(&g)).amax() <= 1e-12);
    assert!((bpp - ems_oracles::dense_b_double(&g)).amax() <= 1e-12);
}

#[test]
fn admittance_matches_dense_builder_on_ieee14() {
    let g = cases::ieee14().bus_branch().unwrap();
    let dense = ems_oracles::dense_ybus(&g);
    let y = ems_core::grid_model::build_admittance(&g).unwrap();
    let mut sparse = nalgebra::DMatrix::from_element(14, 14, num_complex::Complex64::new(0.0, 0.0));
    for (r, c, v) in y.triplets() {
        sparse[(r, c)] = v;
    }
    let diff = (sparse - dense).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn fdpf_matches_newton_raphson() {
    for case in [cases::ieee14(), cases::ieee30(), cases::ieee118()] {
        let g = case.bus_branch().unwrap();
        let start = Instant::now();
        let res = solve(&g);
        let elapsed = start.elapsed();
        assert!(res.converged, "{} did not converge: {:?}", case.name, res.mismatch_history);
        assert!(elapsed.as_secs_f64() < 1.0);
        let nr = ems_oracles::newton_raphson(&g, 1e-11, 20).expect("oracle converges");
        let (dv, da) = res.state.max_difference(&nr);
        assert!(dv <= 1e-6 && da <= 1e-6, "{}: dv={dv:e} da={da:e}", case.name);
    }
}

#[test]
fn solved_state_has_small_full_mismatch() {
    let g = cases::ieee118().bus_branch().unwrap();
    let res = solve(&g);
    let m = compute_mismatch(&g, &res.state).unwrap();
    let sys = build_decoupled(&g).unwrap();
    for &p in &sys.angle.buses {
        let k = res.state.position(g.buses()[p].id).unwrap();
        assert!(m.dp[k].abs() <= 1e-8);
    }
    for &p in &sys.voltage.buses {
        let k = res.state.position(g.buses()[p].id).unwrap();
        assert!(m.dq[k].abs() <= 1e-8);
    }
}

#[test]
fn power_balance_at_convergence() {
    for case in [cases::ieee14(), cases::ieee118()] {
        let g = case.bus_branch().unwrap();
        let res = solve(&g);
        let y = ems_oracles::dense_ybus(&g);
        let s = ems_oracles::dense_injections(&y, &ems_oracles::phasors(&g, &res.state));
        let injected: f64 = s.iter().map(|z| z.re).sum();
        let flows = branch_flows(&g, &res.state).unwrap();
        let losses: f64 = flows.iter().map(|f| f.p_from + f.p_to).sum();
        let shunt: f64 = g
            .buses()
            .iter()
            .map(|b| b.g_shunt * res.state.get(b.id).map_or(0.0, |(vm, _)| vm * vm))
            .sum();
        assert!((injected - losses - shunt).abs() <= 1e-6);
    }
}

#[test]
fn warm_start_from_nearby_solution_needs_fewer_half_iterations() {
    let case = cases::ieee118();
    let g = case.bus_branch().unwrap();
    let base = solve(&g);
    let mut perturbed = case.clone();
    for b in &mut perturbed.buses {
        b.pd *= 1.001;
        b.qd *= 1.001;
    }
    let g2 = perturbed.bus_branch().unwrap();
    let sys = build_decoupled(&g2).unwrap();
    let cold = fdpf_solve(&sys, &g2, None).unwrap();
    let warm = fdpf_solve(&sys, &g2, Some(&base.state)).unwrap();
    assert!(cold.converged && warm.converged);
    assert!(warm.half_iterations() < cold.half_iterations(), "{} vs {}", warm.half_iterations(), cold.half_iterations());
}

#[test]
fn cached_factors_give_identical_results() {
    let g = cases::ieee30().bus_branch().unwrap();
    let sys = build_decoupled(&g).unwrap();
    let first = fdpf_solve(&sys, &g, None).unwrap();
    let again = fdpf_solve(&sys, &g, None).unwrap();
    let fresh = fdpf_solve(&build_decoupled(&g).unwrap(), &g, None).unwrap();
    assert_eq!(first.state, again.state);
    assert_eq!(first.state, fresh.state);
    assert_eq!((first.symbolic_runs, again.symbolic_runs), (1, 0));
}

#[test]
fn stage_timings_account_for_total() {
    let g = cases::ieee118().bus_branch().unwrap();
    let t = solve(&g).timings;
    let parts = t.initialization + t.symbolic_analysis + t.numerical_factorization + t.solve;
    assert!([t.initialization, t.symbolic_analysis, t.numerical_factorization, t.solve].iter().all(|&x| x >= 0.0));
    assert!(parts <= t.total + 1e-12);
    assert!(parts >= 0.5 * t.total);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mismatch_matches_dense_equations(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let g = cases::ieee30().bus_branch().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = StateVector::flat(&g);
        for k in 0..x.len() {
            x.vm[k] = rng.random_range(0.9..1.1);
            x.va[k] = rng.random_range(-0.5..0.5);
        }
        let m = compute_mismatch(&g, &x).unwrap();
        let s = ems_oracles::dense_injections(&ems_oracles::dense_ybus(&g), &ems_oracles::phasors(&g, &x));
        for (k, b) in g.buses().iter().enumerate() {
            prop_assert!((m.dp[k] - (b.p_inj - s[k].re)).abs() <= 1e-12);
            prop_assert!((m.dq[k] - (b.q_inj - s[k].im)).abs() <= 1e-12);
        }
    }
}

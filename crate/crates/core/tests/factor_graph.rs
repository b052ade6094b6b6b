use std::sync::Arc;

use ems_core::factor_graph::{
    factorize, factorize_with, order, pcg_solve, read_coordinate, solve, symbolic_analyze, write_coordinate,
    Parallelism, Permutation, SparseSystem,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pattern-symmetric, strictly diagonally dominant, unsymmetric values.
fn random_dd(n: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseSystem {
    let mut t = Vec::new();
    let mut row_sum = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(density) {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                t.push((i, j, a));
                t.push((j, i, b));
                row_sum[i] += f64::abs(a);
                row_sum[j] += f64::abs(b);
            }
        }
    }
    for (i, s) in row_sum.iter().enumerate() {
        t.push((i, i, s + rng.random_range(0.5..2.0)));
    }
    SparseSystem::from_triplets(n, t).unwrap()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn random_systems_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..200 {
        let n = if k < 20 { rng.random_range(1..=10) } else { rng.random_range(10..=500) };
        let density = (4.0 / n as f64).min(0.5);
        let sys = random_dd(n, density, &mut rng);
        let sym = Arc::new(symbolic_analyze(&sys, &order(&sys)).unwrap());
        let fac = factorize(&sys, &sym).unwrap();
        assert!(ems_oracles::factor_residual(&sys, &fac) <= 1e-9 * sys.max_abs(), "system {k}");
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let x = solve(&fac, &b).unwrap();
        let ax = sys.mul_vec(&x).unwrap();
        let r: Vec<f64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(inf_norm(&r) <= 1e-9 * inf_norm(&b), "system {k}");
        let dense = ems_oracles::dense_solve(&sys, &b).unwrap();
        let diff: Vec<f64> = x.iter().zip(&dense).map(|(a, b)| a - b).collect();
        assert!(inf_norm(&diff) <= 1e-9 * inf_norm(&dense).max(1.0), "system {k}");
    }
}

#[test]
fn two_by_two_against_dense_lu() {
    let sys = SparseSystem::from_triplets(2, [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
    let sym = Arc::new(symbolic_analyze(&sys, &Permutation::identity(2)).unwrap());
    let fac = factorize(&sys, &sym).unwrap();
    let (l, u) = ems_oracles::dense_lu_no_pivot(&ems_oracles::dense(&sys));
    for (r, c, v) in fac.lower_entries() {
        assert!((l[(r, c)] - v).abs() < 1e-15);
    }
    for (r, c, v) in fac.upper_entries() {
        assert!((u[(r, c)] - v).abs() < 1e-15);
    }
    let x = solve(&fac, &[9.0, 7.0]).unwrap();
    let oracle = ems_oracles::dense_solve(&sys, &[9.0, 7.0]).unwrap();
    assert!((x[0] - oracle[0]).abs() < 1e-14 && (x[1] - oracle[1]).abs() < 1e-14);
}

#[test]
fn two_hundred_dimension_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let sys = random_dd(200, 0.03, &mut rng);
    let sym = Arc::new(symbolic_analyze(&sys, &order(&sys)).unwrap());
    let fac = factorize(&sys, &sym).unwrap();
    assert!(ems_oracles::factor_residual(&sys, &fac) <= 1e-9);
}

#[test]
fn minimum_degree_rarely_loses_to_natural_order() {
    let mut wins = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_dd(50, 0.06, &mut rng);
        let md = symbolic_analyze(&sys, &order(&sys)).unwrap().fill_in_count();
        let natural = symbolic_analyze(&sys, &Permutation::identity(50)).unwrap().fill_in_count();
        wins += usize::from(md <= natural);
    }
    assert!(wins >= 95, "{wins}");
}

#[test]
fn exact_preconditioner_on_bprime_outage_beats_plain_cg() {
    let g = ems_core::cases::ieee118().bus_branch().unwrap();
    let sys = ems_core::powerflow::build_decoupled(&g).unwrap();
    let base = sys.factors().unwrap().b_prime.clone().unwrap();
    let k = (0..g.branches().len())
        .find(|&k| ems_oracles::screen(&g, k) == "runnable")
        .unwrap();
    let case = sys.without_branch(&g, k).unwrap();
    let m = case.b_prime.as_ref().unwrap();
    let b: Vec<f64> = (0..m.n()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let pcg = pcg_solve(m, &b, Some(&base), 1e-10, 1000).unwrap();
    let cg = pcg_solve(m, &b, None, 1e-10, 1000).unwrap();
    assert!(pcg.converged && cg.converged);
    assert!(pcg.iterations < cg.iterations, "{} vs {}", pcg.iterations, cg.iterations);
}

fn system_strategy() -> impl Strategy<Value = (SparseSystem, u64)> {
    (1usize..80, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_dd(n, (3.0 / n as f64).min(0.6), &mut rng), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refactorization_with_shared_structure_equals_fresh((sys, seed) in system_strategy()) {
        let sym = Arc::new(symbolic_analyze(&sys, &order(&sys)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
        let mut next = sys.clone();
        let entries: Vec<_> = sys.entries().collect();
        for (r, c, v) in entries {
            let scale = if r == c { rng.random_range(1.0..1.5) } else { rng.random_range(-1.0..1.0) };
            next.set(r, c, v * scale).unwrap();
        }
        let reused = factorize(&next, &sym).unwrap();
        let fresh_sym = Arc::new(symbolic_analyze(&next, &order(&next)).unwrap());
        let fresh = factorize(&next, &fresh_sym).unwrap();
        for ((a, b), (c, d)) in reused.lower_entries().zip(fresh.lower_entries()).zip(reused.upper_entries().zip(fresh.upper_entries())) {
            prop_assert!((a.2 - b.2).abs() <= 1e-12 * (1.0 + b.2.abs()));
            prop_assert!((c.2 - d.2).abs() <= 1e-12 * (1.0 + d.2.abs()));
        }
    }

    #[test]
    fn level_parallel_factors_are_bit_identical((sys, _) in system_strategy()) {
        let sym = Arc::new(symbolic_analyze(&sys, &order(&sys)).unwrap());
        let seq = factorize_with(&sys, &sym, Parallelism::Sequential).unwrap();
        let par = factorize_with(&sys, &sym, Parallelism::Levels).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn level_schedule_and_fill_invariants((sys, _) in system_strategy()) {
        let sym = symbolic_analyze(&sys, &order(&sys)).unwrap();
        for v in 0..sym.n() {
            if let Some(p) = sym.parent(v) {
                prop_assert!(p > v);
                prop_assert!(sym.level(v) < sym.level(p));
            }
        }
        for level in sym.schedule() {
            for &a in level {
                let mut up = sym.parent(a);
                while let Some(p) = up {
                    prop_assert!(!level.contains(&p));
                    up = sym.parent(p);
                }
            }
        }
        let perm = sym.permutation();
        for (r, c, _) in sys.entries() {
            prop_assert!(sym.contains(perm.to_ordered(r), perm.to_ordered(c)));
        }
    }

    #[test]
    fn solutions_do_not_depend_on_ordering((sys, seed) in system_strategy()) {
        let n = sys.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut shuffled: Vec<usize> = (0..n).collect();
        shuffled.shuffle(&mut rng);
        let mut xs = Vec::new();
        for perm in [order(&sys), Permutation::identity(n), Permutation::from_elimination_order(shuffled).unwrap()] {
            let sym = Arc::new(symbolic_analyze(&sys, &perm).unwrap());
            xs.push(solve(&factorize(&sys, &sym).unwrap(), &b).unwrap());
        }
        for x in &xs[1..] {
            for (a, b) in x.iter().zip(&xs[0]) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn coordinate_text_round_trips((sys, _) in system_strategy()) {
        prop_assert_eq!(read_coordinate(&write_coordinate(&sys)).unwrap(), sys);
    }
}

use ems_core::cases;
use ems_core::contingency::{
    critical_pair, enumerate_cases, limits_from_base, run_all, run_case, screen_branch, without_generator, BaseCase,
    CaOptions, ContingencyReport, Outage, Scheme, Screening, Violation,
};
use ems_core::grid_model::{Branch, BranchId, BranchStatus, Bus, BusBranchGraph, BusId, BusType, VoltageBand};
use ems_core::powerflow::{build_decoupled, fdpf_solve, FdpfOptions};

fn base(g: BusBranchGraph) -> BaseCase {
    BaseCase::solve(g, &FdpfOptions::default()).unwrap()
}

fn ieee118() -> BaseCase {
    base(cases::ieee118().bus_branch().unwrap())
}

fn strip(report: &ContingencyReport) -> ContingencyReport {
    let mut r = report.clone();
    r.total_seconds = 0.0;
    for c in &mut r.cases {
        c.seconds = 0.0;
    }
    r
}

#[test]
fn ieee14_enumeration_and_end_point_isolation() {
    let b = base(cases::ieee14().bus_branch().unwrap());
    let cases = enumerate_cases(&b, false);
    assert_eq!(cases.len(), 20);
    let br = b.graph.branches().iter().find(|br| br.from == BusId(7) && br.to == BusId(8)).unwrap();
    assert_eq!(screen_branch(&b.graph, br.id), Screening::EndPointIsolation);
}

#[test]
fn screening_matches_component_oracle() {
    for case in [cases::ieee14(), cases::ieee30(), cases::ieee118()] {
        let b = base(case.bus_branch().unwrap());
        for c in enumerate_cases(&b, false) {
            let Outage::Branch(id) = c.outage else { unreachable!() };
            let k = b.graph.branch_position(id).unwrap();
            let expected = match ems_oracles::screen(&b.graph, k) {
                "runnable" => Screening::Runnable,
                "end-point-isolation" => Screening::EndPointIsolation,
                _ => Screening::Islanding,
            };
            assert_eq!(c.screening, expected, "{} branch {id}", case.name);
        }
    }
}

#[test]
fn reused_structure_cases_equal_from_scratch_solves() {
    let b = ieee118();
    let opts = CaOptions::default();
    let report = run_all(&b, &opts).unwrap();
    assert_eq!(report.symbolic_runs, 1);
    assert_eq!(report.cases_run + report.cases_screened, report.cases_enumerated);
    for c in report.cases.iter().filter(|c| c.screening == Screening::Runnable) {
        let Outage::Branch(id) = c.outage else { unreachable!() };
        let g = b.graph.with_branch_status(id, BranchStatus::Out).unwrap();
        let scratch = fdpf_solve(&build_decoupled(&g).unwrap(), &g, None).unwrap();
        assert!(scratch.converged && c.converged == Some(true), "case {}", c.id);
        let (dv, da) = c.state.as_ref().unwrap().max_difference(&scratch.state);
        assert!(dv <= 1e-6 && da <= 1e-6, "case {}: {dv:e} {da:e}", c.id);
    }
}

#[test]
fn pcg_scheme_agrees_with_direct_scheme_and_beats_plain_cg() {
    let b = ieee118();
    let direct = run_all(&b, &CaOptions::default()).unwrap();
    let pcg = run_all(&b, &CaOptions { scheme: Scheme::Pcg, ..Default::default() }).unwrap();
    let mut plain = CaOptions { scheme: Scheme::Pcg, ..Default::default() };
    plain.pcg.preconditioned = false;
    let cg = run_all(&b, &plain).unwrap();
    assert_eq!(pcg.symbolic_runs, 1);
    for ((d, p), c) in direct.cases.iter().zip(&pcg.cases).zip(&cg.cases) {
        if d.screening != Screening::Runnable {
            continue;
        }
        let (dv, da) = d.state.as_ref().unwrap().max_difference(p.state.as_ref().unwrap());
        assert!(dv <= 1e-6 && da <= 1e-6, "case {}", d.id);
        assert!(p.linear_iterations < c.linear_iterations, "case {}: {} vs {}", d.id, p.linear_iterations, c.linear_iterations);
    }
    let cases = enumerate_cases(&b, false);
    let (critical, light) = critical_pair(&b, &cases).unwrap().unwrap();
    let iters = |id: usize| pcg.cases.iter().find(|c| c.id == id).unwrap().linear_iterations;
    assert!(iters(critical) > iters(light), "{} vs {}", iters(critical), iters(light));
}

#[test]
fn reuse_toggle_keeps_violations_and_counts_symbolic_runs() {
    let b0 = ieee118();
    let b = base(limits_from_base(&b0, 1.2, 0.3).unwrap());
    let on = run_all(&b, &CaOptions::default()).unwrap();
    let off = run_all(&b, &CaOptions { reuse: false, ..Default::default() }).unwrap();
    assert!(!on.violation_set().is_empty());
    assert_eq!(on.violation_set(), off.violation_set());
    assert_eq!(on.symbolic_runs, 1);
    assert_eq!(off.symbolic_runs, off.cases_run + 1);
}

#[test]
fn report_is_independent_of_worker_count() {
    let b = ieee118();
    let one = run_all(&b, &CaOptions { jobs: 1, ..Default::default() }).unwrap();
    let four = run_all(&b, &CaOptions { jobs: 4, ..Default::default() }).unwrap();
    assert_eq!(strip(&one), strip(&four));
    for (a, c) in one.cases.iter().zip(&four.cases) {
        assert_eq!(a.state, c.state);
    }
}

fn bus(id: u32, kind: BusType, p: f64) -> Bus {
    let mut b = Bus::new(id, kind);
    b.p_inj = p;
    b
}

#[test]
fn zero_flow_outage_leaves_state_unchanged() {
    // symmetric loads: the 2–3 tie carries nothing
    let g = BusBranchGraph::new(
        100.0,
        VoltageBand::default(),
        vec![bus(1, BusType::Slack, 0.0), bus(2, BusType::PQ, -0.3), bus(3, BusType::PQ, -0.3)],
        vec![
            Branch::new(1, 1, 2, 0.01, 0.1, 0.0),
            Branch::new(2, 1, 3, 0.01, 0.1, 0.0),
            Branch::new(3, 2, 3, 0.01, 0.1, 0.0),
        ],
        Vec::new(),
    )
    .unwrap();
    let b = base(g);
    let case = enumerate_cases(&b, false).into_iter().find(|c| c.outage == Outage::Branch(BranchId(3))).unwrap();
    for scheme in [Scheme::Fdpf, Scheme::Pcg] {
        let r = run_case(&b, &case, &CaOptions { scheme, ..Default::default() });
        assert_eq!(r.converged, Some(true));
        assert!(r.p_iterations <= 1 && r.q_iterations <= 1);
        let (dv, da) = r.state.unwrap().max_difference(&b.result.state);
        assert!(dv <= 1e-8 && da <= 1e-8);
    }
}

#[test]
fn overload_fixture_flags_exactly_the_overloaded_branch() {
    // two parallel paths from the slack to the load; losing one doubles the other
    let mut branches = vec![
        Branch::new(1, 1, 2, 0.0, 0.1, 0.0),
        Branch::new(2, 1, 2, 0.0, 0.1, 0.0),
        Branch::new(3, 1, 3, 0.0, 0.1, 0.0),
        Branch::new(4, 2, 3, 0.0, 0.1, 0.0),
    ];
    for br in &mut branches {
        br.rate = 10.0;
    }
    branches[0].rate = 0.35;
    let mut buses = vec![bus(1, BusType::Slack, 0.0), bus(2, BusType::PQ, -0.6), bus(3, BusType::PQ, 0.0)];
    buses[1].q_inj = 0.0;
    let b = base(BusBranchGraph::new(100.0, VoltageBand { min: 0.5, max: 1.5 }, buses, branches, Vec::new()).unwrap());
    let report = run_all(&b, &CaOptions::default()).unwrap();
    let case2 = report.cases.iter().find(|c| c.outage == Outage::Branch(BranchId(2))).unwrap();
    assert_eq!(case2.violations.len(), 1);
    assert!(matches!(case2.violations[0], Violation::Overload { branch: BranchId(1), .. }));
    for c in report.cases.iter().filter(|c| c.id != case2.id) {
        assert!(c.violations.is_empty(), "case {}: {:?}", c.id, c.violations);
    }
}

#[test]
fn generator_outage_moves_power_to_slack() {
    let b = ieee118();
    let opts = CaOptions { include_generators: true, ..Default::default() };
    let report = run_all(&b, &opts).unwrap();
    let gens: Vec<_> = report.cases.iter().filter(|c| matches!(c.outage, Outage::Generator(_))).collect();
    assert!(!gens.is_empty());
    for c in &gens {
        let Outage::Generator(name) = &c.outage else { unreachable!() };
        let g = without_generator(&b.graph, name).unwrap();
        let scratch = fdpf_solve(&build_decoupled(&g).unwrap(), &g, None).unwrap();
        if c.converged == Some(true) && scratch.converged {
            let (dv, da) = c.state.as_ref().unwrap().max_difference(&scratch.state);
            assert!(dv <= 1e-6 && da <= 1e-6, "{name}");
        }
    }
    let pcg = run_all(&b, &CaOptions { scheme: Scheme::Pcg, ..opts }).unwrap();
    assert_eq!(pcg.cases.len(), report.cases.len());
}

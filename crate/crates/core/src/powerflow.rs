//! Fast-decoupled power flow, XB variant.
//!
//! `B′` is built from series reactances only (resistance, shunts, charging
//! and taps dropped) over the energized non-slack buses. `B″` is `−Im(Y)` with
//! resistance, shunts, charging and taps kept, over the energized PQ buses.
//! The solver alternates `B′·Δθ = ΔP/V` and `B″·ΔV = ΔQ/V`, checking the full
//! AC mismatch after every half-iteration.
//!
//! Report timings follow four stages: *initialization* is building `B′`/`B″`
//! and the admittance structure plus assigning the start vector; *symbolic
//! analysis* is ordering and structure analysis of both matrices; *numerical
//! factorization* is their LU; *solve* is the iteration loop.

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor_graph::{
    factorize_with, order, pcg_solve, symbolic_analyze, FactorError, NumericFactors, Parallelism, SparseSystem,
    SymbolicStructure,
};
use crate::grid_model::{build_admittance, Admittance, BranchId, BusBranchGraph, BusId, BusType, GridModelError, StateVector};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_HALF_ITERATIONS: usize = 50;
/// PV buses whose computed reactive injection exceeds this (per-unit) are flagged.
pub const EXTREME_Q: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("network has no energized bus")]
    NoEnergizedBus,
    #[error("island of bus {0} has no slack bus")]
    NoSlack(BusId),
    #[error(transparent)]
    Model(#[from] GridModelError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("state vector does not match the network's energized buses")]
    StateMismatch,
}

/// Row maps between bus positions and matrix rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BusIndex {
    /// Bus position per row.
    pub buses: Vec<usize>,
    /// Row per bus position.
    pub rows: Vec<Option<usize>>,
}

impl BusIndex {
    fn new(bus_count: usize, buses: Vec<usize>) -> Self {
        let mut rows = vec![None; bus_count];
        for (r, &b) in buses.iter().enumerate() {
            rows[b] = Some(r);
        }
        Self { buses, rows }
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }
}

/// Symbolic structures of `B′` and `B″`, shareable between systems with the
/// same patterns.
#[derive(Debug, Clone)]
pub struct DecoupledStructure {
    pub b_prime: Option<Arc<SymbolicStructure>>,
    pub b_double: Option<Arc<SymbolicStructure>>,
}

/// LU factors of `B′` and `B″` and what computing them cost.
#[derive(Debug, Clone)]
pub struct DecoupledFactors {
    pub b_prime: Option<NumericFactors>,
    pub b_double: Option<NumericFactors>,
    pub symbolic_time: Duration,
    pub numeric_time: Duration,
    /// 1 when any structure was analysed for these factors, 0 when all were reused.
    pub symbolic_runs: usize,
}

impl DecoupledFactors {
    pub fn structure(&self) -> DecoupledStructure {
        DecoupledStructure {
            b_prime: self.b_prime.as_ref().map(|f| Arc::clone(f.symbolic())),
            b_double: self.b_double.as_ref().map(|f| Arc::clone(f.symbolic())),
        }
    }
}

/// The two decoupled matrices of a network, factorized on first use.
#[derive(Debug)]
pub struct DecoupledSystem {
    /// Energized bus positions, in state-vector order.
    pub energized: Vec<usize>,
    pub angle: BusIndex,
    pub voltage: BusIndex,
    pub b_prime: Option<SparseSystem>,
    pub b_double: Option<SparseSystem>,
    admittance: Admittance,
    reuse: Option<DecoupledStructure>,
    parallelism: Parallelism,
    factors: OnceLock<Result<DecoupledFactors, FactorError>>,
    pub build_time: Duration,
}

impl Clone for DecoupledSystem {
    fn clone(&self) -> Self {
        Self {
            energized: self.energized.clone(),
            angle: self.angle.clone(),
            voltage: self.voltage.clone(),
            b_prime: self.b_prime.clone(),
            b_double: self.b_double.clone(),
            admittance: self.admittance.clone(),
            reuse: self.reuse.clone(),
            parallelism: self.parallelism,
            factors: OnceLock::new(),
            build_time: self.build_time,
        }
    }
}

/// `B′` and `B″` contributions of one branch, in matrix rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BranchStamps {
    pub b_prime: Vec<(usize, usize, f64)>,
    pub b_double: Vec<(usize, usize, f64)>,
}

pub fn build_decoupled(graph: &BusBranchGraph) -> Result<DecoupledSystem, PowerFlowError> {
    DecoupledSystem::build(graph)
}

impl DecoupledSystem {
    pub fn build(graph: &BusBranchGraph) -> Result<Self, PowerFlowError> {
        let start = Instant::now();
        let admittance = build_admittance(graph)?;
        let n = graph.buses().len();
        let energized: Vec<usize> = graph.energized_buses().map(|(p, _)| p).collect();
        if energized.is_empty() {
            return Err(PowerFlowError::NoEnergizedBus);
        }
        let isl = graph.islands();
        for &p in &energized {
            let label = isl.label[p];
            let has_slack = energized
                .iter()
                .any(|&q| isl.label[q] == label && graph.buses()[q].bus_type == BusType::Slack);
            if !has_slack {
                return Err(PowerFlowError::NoSlack(label));
            }
        }
        let angle = BusIndex::new(
            n,
            energized.iter().copied().filter(|&p| graph.buses()[p].bus_type != BusType::Slack).collect(),
        );
        let voltage = BusIndex::new(
            n,
            energized.iter().copied().filter(|&p| graph.buses()[p].bus_type == BusType::PQ).collect(),
        );
        let mut bp: Vec<(usize, usize, f64)> = (0..angle.len()).map(|r| (r, r, 0.0)).collect();
        let mut bpp: Vec<(usize, usize, f64)> = voltage
            .buses
            .iter()
            .enumerate()
            .map(|(r, &p)| (r, r, -graph.buses()[p].b_shunt))
            .collect();
        let mut sys = Self {
            energized,
            angle,
            voltage,
            b_prime: None,
            b_double: None,
            admittance,
            reuse: None,
            parallelism: Parallelism::Sequential,
            factors: OnceLock::new(),
            build_time: Duration::ZERO,
        };
        for k in 0..graph.branches().len() {
            let s = sys.branch_stamps(graph, k);
            bp.extend(s.b_prime);
            bpp.extend(s.b_double);
        }
        sys.b_prime = (!sys.angle.is_empty()).then(|| SparseSystem::from_triplets(sys.angle.len(), bp)).transpose()?;
        sys.b_double =
            (!sys.voltage.is_empty()).then(|| SparseSystem::from_triplets(sys.voltage.len(), bpp)).transpose()?;
        sys.build_time = start.elapsed();
        Ok(sys)
    }

    /// Contributions of the branch at position `k` (nothing when out of service).
    pub fn branch_stamps(&self, graph: &BusBranchGraph, k: usize) -> BranchStamps {
        let br = &graph.branches()[k];
        let mut out = BranchStamps::default();
        if !br.in_service() {
            return out;
        }
        let (Some(f), Some(t)) = (graph.bus_position(br.from), graph.bus_position(br.to)) else {
            return out;
        };
        let stamp = |idx: &BusIndex, dst: &mut Vec<(usize, usize, f64)>, ff: f64, ft: f64, tf: f64, tt: f64| {
            let (rf, rt) = (idx.rows[f], idx.rows[t]);
            if let Some(i) = rf {
                dst.push((i, i, ff));
            }
            if let Some(j) = rt {
                dst.push((j, j, tt));
            }
            if let (Some(i), Some(j)) = (rf, rt) {
                dst.push((i, j, ft));
                dst.push((j, i, tf));
            }
        };
        let b = 1.0 / br.x;
        stamp(&self.angle, &mut out.b_prime, b, -b, -b, b);
        let [yff, yft, ytf, ytt] = br.admittances();
        stamp(&self.voltage, &mut out.b_double, -yff.im, -yft.im, -ytf.im, -ytt.im);
        out
    }

    /// The same network with the branch at position `k` taken out, on this
    /// system's patterns: its entries are subtracted, leaving explicit zeros,
    /// and the factors are computed with this system's symbolic structure.
    pub fn without_branch(&self, graph: &BusBranchGraph, k: usize) -> Result<Self, PowerFlowError> {
        let start = Instant::now();
        let stamps = self.branch_stamps(graph, k);
        let structure = self.factors()?.structure();
        let mut case = self.clone();
        if let Some(m) = case.b_prime.as_mut() {
            for (r, c, v) in stamps.b_prime {
                m.add(r, c, -v)?;
            }
        }
        if let Some(m) = case.b_double.as_mut() {
            for (r, c, v) in stamps.b_double {
                m.add(r, c, -v)?;
            }
        }
        if let Some(i) = case.admittance.branches.iter().position(|b| b.branch == k) {
            let b = case.admittance.branches.remove(i);
            case.admittance.self_terms[b.from] -= b.y_ff;
            case.admittance.self_terms[b.to] -= b.y_tt;
        }
        case.reuse = Some(structure);
        case.build_time = start.elapsed();
        Ok(case)
    }

    /// Uses the given structures instead of analysing this system's patterns;
    /// a missing or differently sized one is analysed afresh.
    pub fn with_structure(mut self, structure: DecoupledStructure) -> Self {
        self.reuse = Some(structure);
        self.factors = OnceLock::new();
        self
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self.factors = OnceLock::new();
        self
    }

    pub fn admittance(&self) -> &Admittance {
        &self.admittance
    }

    /// Factors of both matrices, computed once and cached.
    pub fn factors(&self) -> Result<&DecoupledFactors, FactorError> {
        self.factors.get_or_init(|| self.compute_factors()).as_ref().map_err(Clone::clone)
    }

    pub fn factors_ready(&self) -> bool {
        self.factors.get().is_some()
    }

    fn compute_factors(&self) -> Result<DecoupledFactors, FactorError> {
        let t0 = Instant::now();
        let analyse = |m: &SparseSystem| -> Result<Arc<SymbolicStructure>, FactorError> {
            Ok(Arc::new(symbolic_analyze(m, &order(m))?))
        };
        let mut runs = 0;
        let mut pick = |m: &Option<SparseSystem>, shared: Option<&Arc<SymbolicStructure>>| match (m, shared) {
            (Some(m), Some(s)) if s.n() == m.n() => Ok(Some(s.clone())),
            (Some(m), _) => {
                runs = 1;
                analyse(m).map(Some)
            }
            (None, _) => Ok(None),
        };
        let reuse = self.reuse.as_ref();
        let sp = pick(&self.b_prime, reuse.and_then(|s| s.b_prime.as_ref()))?;
        let sq = pick(&self.b_double, reuse.and_then(|s| s.b_double.as_ref()))?;
        let symbolic_time = t0.elapsed();
        let t1 = Instant::now();
        let fac = |m: &Option<SparseSystem>, s: &Option<Arc<SymbolicStructure>>| -> Result<Option<NumericFactors>, FactorError> {
            match (m, s) {
                (Some(m), Some(s)) => Ok(Some(factorize_with(m, s, self.parallelism)?)),
                (Some(m), None) => Err(FactorError::DimensionMismatch { expected: m.n(), found: 0 }),
                (None, _) => Ok(None),
            }
        };
        let b_prime = fac(&self.b_prime, &sp)?;
        let b_double = fac(&self.b_double, &sq)?;
        Ok(DecoupledFactors { b_prime, b_double, symbolic_time, numeric_time: t1.elapsed(), symbolic_runs: runs })
    }
}

/// Bus power mismatches `scheduled − computed`, in state-vector order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub buses: Vec<BusId>,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
}

fn phasors(graph: &BusBranchGraph, energized: &[usize], x: &StateVector) -> Result<Vec<Complex64>, PowerFlowError> {
    if x.len() != energized.len() || energized.iter().zip(&x.buses).any(|(&p, id)| graph.buses()[p].id != *id) {
        return Err(PowerFlowError::StateMismatch);
    }
    let mut v = vec![Complex64::new(0.0, 0.0); graph.buses().len()];
    for (k, &p) in energized.iter().enumerate() {
        v[p] = Complex64::from_polar(x.vm[k], x.va[k]);
    }
    Ok(v)
}

fn mismatch_with(graph: &BusBranchGraph, y: &Admittance, energized: &[usize], x: &StateVector) -> Result<Mismatch, PowerFlowError> {
    let v = phasors(graph, energized, x)?;
    let s = y.injections(&v);
    let mut m = Mismatch { buses: x.buses.clone(), dp: Vec::with_capacity(x.len()), dq: Vec::with_capacity(x.len()) };
    for &p in energized {
        let bus = &graph.buses()[p];
        m.dp.push(bus.p_inj - s[p].re);
        m.dq.push(bus.q_inj - s[p].im);
    }
    Ok(m)
}

/// `ΔP`, `ΔQ` per energized bus. Slack `ΔP` and PV `ΔQ` are reported but do
/// not take part in convergence.
pub fn compute_mismatch(graph: &BusBranchGraph, x: &StateVector) -> Result<Mismatch, PowerFlowError> {
    let y = build_admittance(graph)?;
    let energized: Vec<usize> = graph.energized_buses().map(|(p, _)| p).collect();
    mismatch_with(graph, &y, &energized, x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdpfOptions {
    pub tol: f64,
    pub max_half_iterations: usize,
}

impl Default for FdpfOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOLERANCE, max_half_iterations: DEFAULT_MAX_HALF_ITERATIONS }
    }
}

/// Settings for solving each half-step by preconditioned conjugate gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// When false, plain conjugate gradient is used (the baseline).
    pub preconditioned: bool,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 1000, preconditioned: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PfTimings {
    pub initialization: f64,
    pub symbolic_analysis: f64,
    pub numerical_factorization: f64,
    pub solve: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub state: StateVector,
    pub converged: bool,
    pub p_iterations: usize,
    pub q_iterations: usize,
    /// Largest convergence-relevant mismatch at the start and after every half-iteration.
    pub mismatch_history: Vec<f64>,
    /// Conjugate-gradient iterations summed over all half-steps (0 for direct solves).
    pub linear_iterations: usize,
    /// PV buses whose computed reactive injection is beyond [`EXTREME_Q`].
    pub extreme_q: Vec<BusId>,
    pub timings: PfTimings,
    pub symbolic_runs: usize,
}

impl PowerFlowResult {
    pub fn half_iterations(&self) -> usize {
        self.p_iterations + self.q_iterations
    }

    pub fn final_mismatch(&self) -> f64 {
        self.mismatch_history.last().copied().unwrap_or(0.0)
    }
}

enum HalfSolver<'a> {
    Direct(&'a DecoupledFactors),
    Pcg { precond: &'a DecoupledFactors, opts: PcgOptions, iterations: usize },
}

impl HalfSolver<'_> {
    fn solve(&mut self, m: &SparseSystem, q_half: bool, rhs: &[f64]) -> Result<Vec<f64>, FactorError> {
        match self {
            HalfSolver::Direct(f) => {
                let fac = if q_half { &f.b_double } else { &f.b_prime };
                let fac = fac.as_ref().expect("factors exist for every non-empty matrix");
                let mut x = rhs.to_vec();
                fac.solve_in_place(&mut x)?;
                Ok(x)
            }
            HalfSolver::Pcg { precond, opts, iterations } => {
                let pre = if q_half { &precond.b_double } else { &precond.b_prime };
                let pre = if opts.preconditioned { pre.as_ref() } else { None };
                let sol = pcg_solve(m, rhs, pre, opts.tol, opts.max_iter)?;
                *iterations += sol.iterations;
                Ok(sol.x)
            }
        }
    }
}

/// Start vector: flat, or `warm` where it covers a bus. Slack and PV
/// magnitudes always sit at their setpoints; warm angles are shifted so each
/// island's slack angle is zero.
fn start_state(graph: &BusBranchGraph, sys: &DecoupledSystem, warm: Option<&StateVector>) -> StateVector {
    let mut x = StateVector::flat(graph);
    let Some(w) = warm else { return x };
    let isl = graph.islands();
    let slack_angle = |p: usize| -> f64 {
        sys.energized
            .iter()
            .find(|&&q| isl.label[q] == isl.label[p] && graph.buses()[q].bus_type == BusType::Slack)
            .and_then(|&q| w.get(graph.buses()[q].id))
            .map_or(0.0, |(_, a)| a)
    };
    for (k, &p) in sys.energized.iter().enumerate() {
        let bus = &graph.buses()[p];
        if let Some((vm, va)) = w.get(bus.id) {
            x.va[k] = if bus.bus_type == BusType::Slack { 0.0 } else { va - slack_angle(p) };
            if bus.bus_type == BusType::PQ && vm > 0.0 {
                x.vm[k] = vm;
            }
        }
    }
    x
}

/// Solves with the cached direct factors of `sys`.
pub fn fdpf_solve(
    sys: &DecoupledSystem,
    graph: &BusBranchGraph,
    warm: Option<&StateVector>,
) -> Result<PowerFlowResult, PowerFlowError> {
    fdpf_solve_with(sys, graph, warm, &FdpfOptions::default())
}

pub fn fdpf_solve_with(
    sys: &DecoupledSystem,
    graph: &BusBranchGraph,
    warm: Option<&StateVector>,
    opts: &FdpfOptions,
) -> Result<PowerFlowResult, PowerFlowError> {
    let t0 = Instant::now();
    let x = start_state(graph, sys, warm);
    let init = sys.build_time + t0.elapsed();
    let fresh = !sys.factors_ready();
    let f = sys.factors()?;
    let (sym, num, runs) = if fresh { (f.symbolic_time, f.numeric_time, f.symbolic_runs) } else { (Duration::ZERO, Duration::ZERO, 0) };
    let mut solver = HalfSolver::Direct(f);
    iterate(sys, graph, x, opts, &mut solver, [init, sym, num], runs, t0)
}

/// Solves each half-step with conjugate gradient on this system's matrices,
/// preconditioned by `precond` (normally the base-case factors). No factors
/// of `sys` itself are computed.
pub fn fdpf_solve_pcg(
    sys: &DecoupledSystem,
    graph: &BusBranchGraph,
    warm: Option<&StateVector>,
    precond: &DecoupledFactors,
    opts: &FdpfOptions,
    pcg: &PcgOptions,
) -> Result<PowerFlowResult, PowerFlowError> {
    let t0 = Instant::now();
    let x = start_state(graph, sys, warm);
    let init = sys.build_time + t0.elapsed();
    let mut solver = HalfSolver::Pcg { precond, opts: *pcg, iterations: 0 };
    let mut res = iterate(sys, graph, x, opts, &mut solver, [init, Duration::ZERO, Duration::ZERO], 0, t0)?;
    if let HalfSolver::Pcg { iterations, .. } = solver {
        res.linear_iterations = iterations;
    }
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    sys: &DecoupledSystem,
    graph: &BusBranchGraph,
    mut x: StateVector,
    opts: &FdpfOptions,
    solver: &mut HalfSolver<'_>,
    [init, sym, num]: [Duration; 3],
    symbolic_runs: usize,
    t0: Instant,
) -> Result<PowerFlowResult, PowerFlowError> {
    let t_solve = Instant::now();
    // state-vector position of each bus position
    let mut k_of = vec![usize::MAX; graph.buses().len()];
    for (k, &p) in sys.energized.iter().enumerate() {
        k_of[p] = k;
    }
    let worst = |m: &Mismatch, x: &StateVector| -> (f64, f64) {
        let scale = |k: usize| 1.0f64.max(1.0 / x.vm[k]);
        let p = sys.angle.buses.iter().map(|&b| m.dp[k_of[b]].abs() * scale(k_of[b])).fold(0.0, f64::max);
        let q = sys.voltage.buses.iter().map(|&b| m.dq[k_of[b]].abs() * scale(k_of[b])).fold(0.0, f64::max);
        (p, q)
    };
    let mut m = mismatch_with(graph, &sys.admittance, &sys.energized, &x)?;
    let (p, q) = worst(&m, &x);
    let mut history = vec![p.max(q)];
    let mut converged = p.max(q) < opts.tol;
    let (mut p_it, mut q_it) = (0, 0);

    while !converged && p_it + q_it < opts.max_half_iterations {
        if let Some(bp) = &sys.b_prime {
            let rhs: Vec<f64> = sys.angle.buses.iter().map(|&b| m.dp[k_of[b]] / x.vm[k_of[b]]).collect();
            let d = solver.solve(bp, false, &rhs)?;
            for (r, &b) in sys.angle.buses.iter().enumerate() {
                x.va[k_of[b]] += d[r];
            }
        }
        p_it += 1;
        m = mismatch_with(graph, &sys.admittance, &sys.energized, &x)?;
        let (p, q) = worst(&m, &x);
        history.push(p.max(q));
        if p.max(q) < opts.tol {
            converged = true;
            break;
        }
        let Some(bpp) = &sys.b_double else { continue };
        if p_it + q_it >= opts.max_half_iterations {
            break;
        }
        let rhs: Vec<f64> = sys.voltage.buses.iter().map(|&b| m.dq[k_of[b]] / x.vm[k_of[b]]).collect();
        let d = solver.solve(bpp, true, &rhs)?;
        for (r, &b) in sys.voltage.buses.iter().enumerate() {
            x.vm[k_of[b]] += d[r];
        }
        q_it += 1;
        m = mismatch_with(graph, &sys.admittance, &sys.energized, &x)?;
        let (p, q) = worst(&m, &x);
        history.push(p.max(q));
        converged = p.max(q) < opts.tol;
    }
    let solve = t_solve.elapsed();

    let extreme_q = sys
        .energized
        .iter()
        .enumerate()
        .filter(|&(_, &p)| graph.buses()[p].bus_type == BusType::PV)
        .filter(|&(k, &p)| (graph.buses()[p].q_inj - m.dq[k]).abs() > EXTREME_Q)
        .map(|(_, &p)| graph.buses()[p].id)
        .collect();
    let total = (t0.elapsed() + sys.build_time).as_secs_f64();
    Ok(PowerFlowResult {
        state: x,
        converged,
        p_iterations: p_it,
        q_iterations: q_it,
        mismatch_history: history,
        linear_iterations: 0,
        extreme_q,
        timings: PfTimings {
            initialization: init.as_secs_f64(),
            symbolic_analysis: sym.as_secs_f64(),
            numerical_factorization: num.as_secs_f64(),
            solve: solve.as_secs_f64(),
            total: total.max(init.as_secs_f64() + sym.as_secs_f64() + num.as_secs_f64() + solve.as_secs_f64()),
        },
        symbolic_runs,
    })
}

/// Complex power at both ends of an in-service branch, per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub branch: BranchId,
    pub from: BusId,
    pub to: BusId,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    /// Larger of the two end apparent powers.
    pub s_max: f64,
    /// Limit, 0 when unlimited.
    pub rate: f64,
}

pub fn branch_flows(graph: &BusBranchGraph, x: &StateVector) -> Result<Vec<BranchFlow>, PowerFlowError> {
    let y = build_admittance(graph)?;
    let energized: Vec<usize> = graph.energized_buses().map(|(p, _)| p).collect();
    let v = phasors(graph, &energized, x)?;
    Ok(y
        .branches
        .iter()
        .filter(|b| graph.is_energized(b.from))
        .map(|b| {
            let br = &graph.branches()[b.branch];
            let (sf, st) = y.flow(b, &v);
            BranchFlow {
                branch: br.id,
                from: br.from,
                to: br.to,
                p_from: sf.re,
                q_from: sf.im,
                p_to: st.re,
                q_to: st.im,
                s_max: sf.norm().max(st.norm()),
                rate: br.rate,
            }
        })
        .collect())
}

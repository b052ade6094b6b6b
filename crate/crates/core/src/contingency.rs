//! N-1 contingency analysis.
//!
//! Every case is the base case with one element removed. With reuse enabled a
//! branch case keeps the base `B′`/`B″` patterns with the branch's entries
//! subtracted, so only numeric factorization runs, and it starts from the
//! base state. Cases that split the network are screened out, not solved.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::{BranchId, BranchStatus, BusBranchGraph, BusId, BusType, GridModelError, StateVector};
use crate::powerflow::{
    branch_flows, fdpf_solve_pcg, fdpf_solve_with, BranchStamps, DecoupledFactors, DecoupledSystem, FdpfOptions,
    PcgOptions, PowerFlowError, PowerFlowResult,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContingencyError {
    #[error("base case did not converge (final mismatch {0:e})")]
    BaseNotConverged(f64),
    #[error("could not build a thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Model(#[from] GridModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outage {
    Branch(BranchId),
    /// Generator unit, by name.
    Generator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Screening {
    Runnable,
    Islanding,
    EndPointIsolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fdpf,
    Pcg,
}

#[derive(Debug, Clone)]
pub struct ContingencyCase {
    pub id: usize,
    pub outage: Outage,
    pub screening: Screening,
    /// `B′`/`B″` entries removed from the base matrices (branch cases).
    pub delta: BranchStamps,
}

/// A solved base case: the network, its factorized decoupled system and state.
#[derive(Debug)]
pub struct BaseCase {
    pub graph: BusBranchGraph,
    pub system: DecoupledSystem,
    pub result: PowerFlowResult,
}

impl BaseCase {
    pub fn solve(graph: BusBranchGraph, opts: &FdpfOptions) -> Result<Self, ContingencyError> {
        let system = DecoupledSystem::build(&graph)?;
        let result = fdpf_solve_with(&system, &graph, None, opts)?;
        if !result.converged {
            return Err(ContingencyError::BaseNotConverged(result.final_mismatch()));
        }
        Ok(Self { graph, system, result })
    }

    fn factors(&self) -> Result<&DecoupledFactors, ContingencyError> {
        Ok(self.system.factors().map_err(PowerFlowError::from)?)
    }
}

/// One case per in-service branch of an energized island, ordered by branch
/// id, then (optionally) one per non-slack generator unit, ordered by name.
pub fn enumerate_cases(base: &BaseCase, include_generators: bool) -> Vec<ContingencyCase> {
    let g = &base.graph;
    let mut cases: Vec<ContingencyCase> = g
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, br)| br.in_service() && g.bus_position(br.from).is_some_and(|p| g.is_energized(p)))
        .map(|(k, br)| ContingencyCase {
            id: 0,
            outage: Outage::Branch(br.id),
            screening: screen_branch(g, br.id),
            delta: base.system.branch_stamps(g, k),
        })
        .collect();
    if include_generators {
        let mut units: Vec<&str> = g
            .generators()
            .iter()
            .filter(|u| !u.slack_candidate && g.bus_position(u.bus).is_some_and(|p| g.is_energized(p)))
            .map(|u| u.name.as_str())
            .collect();
        units.sort_unstable();
        cases.extend(units.into_iter().map(|name| ContingencyCase {
            id: 0,
            outage: Outage::Generator(name.to_string()),
            screening: Screening::Runnable,
            delta: BranchStamps::default(),
        }));
    }
    for (i, c) in cases.iter_mut().enumerate() {
        c.id = i + 1;
    }
    cases
}

/// Runnable if the branch's ends stay connected. Otherwise end-point
/// isolation when the side cut off from every slack candidate is a single
/// bus, and islanding in every other split.
pub fn screen_branch(g: &BusBranchGraph, id: BranchId) -> Screening {
    let Some(br) = g.branch(id) else { return Screening::Runnable };
    if !br.in_service() {
        return Screening::Runnable;
    }
    let after = g.with_branch_status(id, BranchStatus::Out).expect("branch exists");
    let isl = after.islands();
    let (f, t) = (after.bus_position(br.from).expect("valid"), after.bus_position(br.to).expect("valid"));
    if isl.label[f] == isl.label[t] {
        return Screening::Runnable;
    }
    let size = |p: usize| isl.label.iter().filter(|&&l| l == isl.label[p]).count();
    let isolated = [(f, t), (t, f)]
        .iter()
        .any(|&(side, other)| !isl.energized[side] && isl.energized[other] && size(side) == 1);
    if isolated {
        Screening::EndPointIsolation
    } else {
        Screening::Islanding
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Violation {
    /// Apparent power above the branch rating.
    Overload { branch: BranchId, s: f64, rate: f64 },
    Voltage { bus: BusId, vm: f64 },
}

impl Violation {
    /// Identity of the violated element, without the values.
    pub fn key(&self) -> (u8, u32) {
        match self {
            Violation::Overload { branch, .. } => (0, branch.0),
            Violation::Voltage { bus, .. } => (1, bus.0),
        }
    }
}

/// Branch overloads (only for rated branches) and voltages outside the band.
pub fn violations(graph: &BusBranchGraph, x: &StateVector) -> Result<Vec<Violation>, PowerFlowError> {
    let mut out: Vec<Violation> = branch_flows(graph, x)?
        .into_iter()
        .filter(|f| f.rate > 0.0 && f.s_max > f.rate)
        .map(|f| Violation::Overload { branch: f.branch, s: f.s_max, rate: f.rate })
        .collect();
    let band = graph.v_band;
    out.extend(
        x.buses
            .iter()
            .zip(&x.vm)
            .filter(|(_, &vm)| vm < band.min || vm > band.max)
            .map(|(&bus, &vm)| Violation::Voltage { bus, vm }),
    );
    Ok(out)
}

/// Branch ratings set to `margin` times the base-case apparent flow, but
/// never below `floor` (per-unit).
pub fn limits_from_base(base: &BaseCase, margin: f64, floor: f64) -> Result<BusBranchGraph, ContingencyError> {
    let flows = branch_flows(&base.graph, &base.result.state)?;
    let mut branches = base.graph.branches().to_vec();
    for f in flows {
        if let Some(br) = branches.iter_mut().find(|b| b.id == f.branch) {
            br.rate = (margin * f.s_max).max(floor);
        }
    }
    let g = &base.graph;
    Ok(BusBranchGraph::new(g.mva_base, g.v_band, g.buses().to_vec(), branches, g.generators().to_vec())?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaOptions {
    pub scheme: Scheme,
    /// Reuse base structures and state. Off: every case builds, analyses and
    /// factorizes its own matrices and starts flat.
    pub reuse: bool,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    pub include_generators: bool,
    pub fdpf: FdpfOptions,
    pub pcg: PcgOptions,
}

impl Default for CaOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Fdpf,
            reuse: true,
            jobs: 0,
            include_generators: false,
            fdpf: FdpfOptions::default(),
            pcg: PcgOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: usize,
    pub outage: Outage,
    pub screening: Screening,
    /// `None` for screened cases.
    pub converged: Option<bool>,
    pub p_iterations: usize,
    pub q_iterations: usize,
    /// Conjugate-gradient iterations over all half-steps (PCG scheme).
    pub linear_iterations: usize,
    pub final_mismatch: f64,
    pub violations: Vec<Violation>,
    pub symbolic_runs: usize,
    pub seconds: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub state: Option<StateVector>,
}

impl CaseResult {
    fn screened(case: &ContingencyCase) -> Self {
        Self {
            id: case.id,
            outage: case.outage.clone(),
            screening: case.screening,
            converged: None,
            p_iterations: 0,
            q_iterations: 0,
            linear_iterations: 0,
            final_mismatch: 0.0,
            violations: Vec::new(),
            symbolic_runs: 0,
            seconds: 0.0,
            error: None,
            state: None,
        }
    }

    /// Solved but not converged, or failed.
    pub fn is_alert(&self) -> bool {
        self.converged == Some(false) || self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyReport {
    pub scheme: Scheme,
    pub reuse: bool,
    pub cases: Vec<CaseResult>,
    pub cases_enumerated: usize,
    pub cases_run: usize,
    pub cases_screened: usize,
    pub alerts: usize,
    /// Symbolic analyses, the base case's included.
    pub symbolic_runs: usize,
    pub total_seconds: f64,
}

impl ContingencyReport {
    /// `(case id, violated element)` pairs over all cases.
    pub fn violation_set(&self) -> BTreeSet<(usize, (u8, u32))> {
        self.cases
            .iter()
            .flat_map(|c| c.violations.iter().map(move |v| (c.id, v.key())))
            .collect()
    }
}

/// Solves one runnable case.
pub fn run_case(base: &BaseCase, case: &ContingencyCase, opts: &CaOptions) -> CaseResult {
    let start = Instant::now();
    let mut out = CaseResult::screened(case);
    if case.screening != Screening::Runnable {
        return out;
    }
    match solve_case(base, case, opts) {
        Ok((graph, res)) => {
            out.converged = Some(res.converged);
            out.p_iterations = res.p_iterations;
            out.q_iterations = res.q_iterations;
            out.linear_iterations = res.linear_iterations;
            out.final_mismatch = res.final_mismatch();
            out.symbolic_runs = res.symbolic_runs;
            if res.converged {
                match violations(&graph, &res.state) {
                    Ok(v) => out.violations = v,
                    Err(e) => out.error = Some(e.to_string()),
                }
            }
            out.state = Some(res.state);
        }
        Err(e) => {
            out.converged = Some(false);
            out.error = Some(e.to_string());
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

fn solve_case(
    base: &BaseCase,
    case: &ContingencyCase,
    opts: &CaOptions,
) -> Result<(BusBranchGraph, PowerFlowResult), ContingencyError> {
    let g = &base.graph;
    let (graph, system) = match &case.outage {
        Outage::Branch(id) => {
            let k = g.branch_position(*id).ok_or(GridModelError::UnknownBranch(*id))?;
            let graph = g.with_branch_status(*id, BranchStatus::Out)?;
            let system = if opts.reuse {
                base.system.without_branch(g, k)?
            } else {
                DecoupledSystem::build(&graph)?
            };
            (graph, system)
        }
        Outage::Generator(name) => {
            let graph = without_generator(g, name)?;
            let system = DecoupledSystem::build(&graph)?;
            let system = if opts.reuse { system.with_structure(base.factors()?.structure()) } else { system };
            (graph, system)
        }
    };
    let warm = opts.reuse.then_some(&base.result.state);
    let res = match opts.scheme {
        Scheme::Fdpf => fdpf_solve_with(&system, &graph, warm, &opts.fdpf)?,
        Scheme::Pcg => {
            let base_factors = base.factors()?;
            let fits = |a: &Option<crate::factor_graph::NumericFactors>, m: &Option<crate::factor_graph::SparseSystem>| {
                a.as_ref().map(|f| f.n()) == m.as_ref().map(|m| m.n())
            };
            if fits(&base_factors.b_prime, &system.b_prime) && fits(&base_factors.b_double, &system.b_double) {
                fdpf_solve_pcg(&system, &graph, warm, base_factors, &opts.fdpf, &opts.pcg)?
            } else {
                // a PV bus lost its last unit: B″ grew a row the base factors lack
                let partial = DecoupledFactors {
                    b_prime: base_factors.b_prime.clone().filter(|_| fits(&base_factors.b_prime, &system.b_prime)),
                    b_double: None,
                    symbolic_time: Default::default(),
                    numeric_time: Default::default(),
                    symbolic_runs: 0,
                };
                fdpf_solve_pcg(&system, &graph, warm, &partial, &opts.fdpf, &opts.pcg)?
            }
        }
    };
    Ok((graph, res))
}

/// The network with one generator unit removed. Its active power is picked
/// up by the slack bus; a PV bus left without units becomes PQ.
pub fn without_generator(g: &BusBranchGraph, name: &str) -> Result<BusBranchGraph, ContingencyError> {
    let unit = g
        .generators()
        .iter()
        .find(|u| u.name == name)
        .ok_or_else(|| GridModelError::UnknownDevice(name.to_string()))?;
    let mut buses = g.buses().to_vec();
    let pos = g.bus_position(unit.bus).ok_or(GridModelError::UnknownBus(unit.bus))?;
    let remaining: Vec<_> = g.generators().iter().filter(|u| u.name != name).cloned().collect();
    let bus = &mut buses[pos];
    bus.p_inj -= unit.p;
    if bus.bus_type == BusType::PV && !remaining.iter().any(|u| u.bus == unit.bus) {
        bus.bus_type = BusType::PQ;
        bus.q_inj -= unit.q;
    }
    Ok(BusBranchGraph::new(g.mva_base, g.v_band, buses, g.branches().to_vec(), remaining)?)
}

/// Enumerates, screens and solves every case. Results are ordered by case
/// id whatever the number of workers.
pub fn run_all(base: &BaseCase, opts: &CaOptions) -> Result<ContingencyReport, ContingencyError> {
    let start = Instant::now();
    let base_runs = base.factors()?.symbolic_runs.max(1);
    let cases = enumerate_cases(base, opts.include_generators);
    let work = || -> Vec<CaseResult> { cases.par_iter().map(|c| run_case(base, c, opts)).collect() };
    let mut results = if opts.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| ContingencyError::ThreadPool(e.to_string()))?
            .install(work)
    };
    results.sort_by_key(|r| r.id);
    let cases_run = results.iter().filter(|r| r.screening == Screening::Runnable).count();
    Ok(ContingencyReport {
        scheme: opts.scheme,
        reuse: opts.reuse,
        cases_enumerated: results.len(),
        cases_run,
        cases_screened: results.len() - cases_run,
        alerts: results.iter().filter(|r| r.is_alert()).count(),
        symbolic_runs: base_runs + results.iter().map(|r| r.symbolic_runs).sum::<usize>(),
        total_seconds: start.elapsed().as_secs_f64(),
        cases: results,
    })
}

/// Runnable branch cases with the largest and smallest base-case active flow:
/// `(critical, light)`.
pub fn critical_pair(base: &BaseCase, cases: &[ContingencyCase]) -> Result<Option<(usize, usize)>, ContingencyError> {
    let flows = branch_flows(&base.graph, &base.result.state)?;
    let mut loaded: Vec<(f64, usize)> = cases
        .iter()
        .filter(|c| c.screening == Screening::Runnable)
        .filter_map(|c| match c.outage {
            Outage::Branch(id) => flows.iter().find(|f| f.branch == id).map(|f| (f.p_from.abs(), c.id)),
            Outage::Generator(_) => None,
        })
        .collect();
    loaded.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(match (loaded.last(), loaded.first()) {
        (Some(hi), Some(lo)) if hi.1 != lo.1 => Some((hi.1, lo.1)),
        _ => None,
    })
}

//! Weighted-least-squares state estimation.
//!
//! Each iteration solves `G·Δx = Hᵀ·R⁻¹·(z − h(x))` with `G = Hᵀ·R⁻¹·H`.
//! A cold start begins flat and re-forms the gain at every iterate. A warm
//! start on an unchanged topology keeps the previous snapshot's last gain
//! factors unmodified (constant gain) and starts from the previous state.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor_graph::{factorize, order, symbolic_analyze, FactorError, NumericFactors, SparseSystem,
    SymbolicStructure,
};
use crate::grid_model::{
    build_admittance, Admittance, BranchEnd, BranchId, BusBranchGraph, BusId, BusType, GridModelError,
    MeasurementKind, MeasurementSet, MeasurementSite, NodeBreakerGraph, StateVector,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("network has no energized bus")]
    NoEnergizedBus,
    #[error("island of bus {island} is unobservable (singular gain matrix)")]
    Unobservable { island: BusId },
    #[error("measurement {id}: {reason}")]
    InvalidMeasurement { id: String, reason: String },
    #[error(transparent)]
    Model(#[from] GridModelError),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementLocation {
    Bus(BusId),
    Branch { branch: BranchId, end: BranchEnd },
}

/// A meter resolved onto the bus-branch model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub id: String,
    pub kind: MeasurementKind,
    pub location: MeasurementLocation,
    pub z: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedMeasurement {
    pub id: String,
    pub reason: String,
}

/// Maps node-breaker meters onto `graph`. Meters without a value, on
/// de-energized buses, or on branches absent from the model are excluded and
/// reported.
pub fn resolve_measurements(
    nb: &NodeBreakerGraph,
    graph: &BusBranchGraph,
    set: &MeasurementSet,
) -> (Vec<Measurement>, Vec<ExcludedMeasurement>) {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    let node_bus = graph.provenance().map(|p| &p.node_bus);
    for def in set.defs() {
        let exclude = |reason: &str| ExcludedMeasurement { id: def.id.clone(), reason: reason.to_string() };
        let Some(z) = def.value else {
            excluded.push(exclude("no value received"));
            continue;
        };
        let location = match def.site {
            MeasurementSite::Device(d) => {
                let bus = nb
                    .devices()
                    .get(d)
                    .and_then(|dev| dev.terminals.first())
                    .and_then(|&n| node_bus.and_then(|nodes| nodes.get(n)));
                match bus {
                    Some(&b) => MeasurementLocation::Bus(b),
                    None => {
                        excluded.push(exclude("device not mapped to a bus"));
                        continue;
                    }
                }
            }
            MeasurementSite::LinkEnd { link, end } => {
                MeasurementLocation::Branch { branch: BranchId(link as u32 + 1), end }
            }
        };
        let m = Measurement { id: def.id.clone(), kind: def.kind, location, z, sigma: def.sigma };
        match check(graph, &m) {
            Ok(()) => used.push(m),
            Err(reason) => excluded.push(exclude(reason)),
        }
    }
    (used, excluded)
}

fn check(graph: &BusBranchGraph, m: &Measurement) -> Result<(), &'static str> {
    match m.location {
        MeasurementLocation::Bus(b) => {
            if m.kind.is_flow() {
                return Err("flow measurement at a bus");
            }
            let pos = graph.bus_position(b).ok_or("unknown bus")?;
            if !graph.is_energized(pos) {
                return Err("bus is de-energized");
            }
        }
        MeasurementLocation::Branch { branch, .. } => {
            if !m.kind.is_flow() {
                return Err("bus quantity on a branch");
            }
            let br = graph.branch(branch).ok_or("branch not in the bus-branch model")?;
            if !br.in_service() {
                return Err("branch out of service");
            }
            if !graph.is_energized(graph.bus_position(br.from).ok_or("unknown bus")?) {
                return Err("branch is de-energized");
            }
        }
    }
    Ok(())
}

/// Order of the unknowns: angles of energized non-slack buses, then
/// magnitudes of all energized buses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub angle_buses: Vec<BusId>,
    pub voltage_buses: Vec<BusId>,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.angle_buses.len() + self.voltage_buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unknowns of `x` in layout order.
    pub fn pack(&self, x: &StateVector) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.angle_buses {
            out.push(x.get(*b)?.1);
        }
        for b in &self.voltage_buses {
            out.push(x.get(*b)?.0);
        }
        Some(out)
    }

    /// Writes unknowns back into `x` (slack angles untouched).
    pub fn unpack(&self, values: &[f64], x: &mut StateVector) {
        for (b, v) in self.angle_buses.iter().zip(values) {
            if let Some(k) = x.position(*b) {
                x.va[k] = *v;
            }
        }
        for (b, v) in self.voltage_buses.iter().zip(&values[self.angle_buses.len()..]) {
            if let Some(k) = x.position(*b) {
                x.vm[k] = *v;
            }
        }
    }
}

/// Admittance and column maps of one topology.
#[derive(Debug, Clone)]
pub struct SeModel {
    pub layout: StateLayout,
    admittance: Admittance,
    /// Per bus position: neighbours with the mutual admittance seen from this bus.
    neighbours: Vec<Vec<(usize, Complex64)>>,
    angle_col: Vec<Option<usize>>,
    voltage_col: Vec<Option<usize>>,
    energized: Vec<usize>,
}

impl SeModel {
    pub fn new(graph: &BusBranchGraph) -> Result<Self, EstimationError> {
        let admittance = build_admittance(graph)?;
        let n = graph.buses().len();
        let mut neighbours = vec![Vec::new(); n];
        for b in &admittance.branches {
            neighbours[b.from].push((b.to, b.y_ft));
            neighbours[b.to].push((b.from, b.y_tf));
        }
        let energized: Vec<usize> = graph.energized_buses().map(|(p, _)| p).collect();
        if energized.is_empty() {
            return Err(EstimationError::NoEnergizedBus);
        }
        let mut angle_col = vec![None; n];
        let mut voltage_col = vec![None; n];
        let mut layout = StateLayout { angle_buses: Vec::new(), voltage_buses: Vec::new() };
        for &p in &energized {
            let bus = &graph.buses()[p];
            if bus.bus_type != BusType::Slack {
                angle_col[p] = Some(layout.angle_buses.len());
                layout.angle_buses.push(bus.id);
            }
        }
        for &p in &energized {
            voltage_col[p] = Some(layout.angle_buses.len() + layout.voltage_buses.len());
            layout.voltage_buses.push(graph.buses()[p].id);
        }
        Ok(Self { layout, admittance, neighbours, angle_col, voltage_col, energized })
    }

    /// Flat start: V = 1, angles 0 except slack angles at their setpoint.
    pub fn flat_state(&self, graph: &BusBranchGraph) -> StateVector {
        let mut x = StateVector { buses: Vec::new(), vm: Vec::new(), va: Vec::new() };
        for &p in &self.energized {
            let bus = &graph.buses()[p];
            x.buses.push(bus.id);
            x.vm.push(1.0);
            x.va.push(if bus.bus_type == BusType::Slack { bus.theta } else { 0.0 });
        }
        x
    }

    fn columns(&self, bus: usize) -> (Option<usize>, Option<usize>) {
        (self.angle_col[bus], self.voltage_col[bus])
    }
}

/// Measurement function values and the sparse Jacobian, one row per
/// measurement as `(column, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementJacobian {
    pub h: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

/// Apparent power `S = E_a·conj(Σ y_ab·E_b)` of one port and its partial
/// derivatives `(bus, ∂S/∂θ, ∂S/∂V)`.
fn port(a: usize, terms: &[(usize, Complex64)], e: &[Complex64], vm: &[f64]) -> (Complex64, Vec<(usize, Complex64, Complex64)>) {
    let j = Complex64::new(0.0, 1.0);
    let current: Complex64 = terms.iter().map(|&(b, y)| y * e[b]).sum();
    let s = e[a] * current.conj();
    let mut d = Vec::with_capacity(terms.len() + 1);
    d.push((a, j * s, s / vm[a]));
    for &(b, y) in terms {
        let de_theta = j * e[b];
        let de_v = e[b] / vm[b];
        d.push((b, e[a] * (y * de_theta).conj(), e[a] * (y * de_v).conj()));
    }
    (s, d)
}

/// Evaluates `h(x)` and `H(x)` for every measurement.
pub fn evaluate_h(
    model: &SeModel,
    graph: &BusBranchGraph,
    meas: &[Measurement],
    x: &StateVector,
) -> Result<MeasurementJacobian, EstimationError> {
    let mut vm = vec![1.0; graph.buses().len()];
    let mut e = vec![Complex64::new(0.0, 0.0); graph.buses().len()];
    for (k, id) in x.buses.iter().enumerate() {
        if let Some(p) = graph.bus_position(*id) {
            vm[p] = x.vm[k];
            e[p] = Complex64::from_polar(x.vm[k], x.va[k]);
        }
    }
    let rows: Result<Vec<(f64, Vec<(usize, f64)>)>, EstimationError> =
        meas.par_iter().map(|m| measurement_row(model, graph, m, &e, &vm)).collect();
    let (h, rows) = rows?.into_iter().unzip();
    Ok(MeasurementJacobian { h, rows })
}

fn measurement_row(
    model: &SeModel,
    graph: &BusBranchGraph,
    m: &Measurement,
    e: &[Complex64],
    vm: &[f64],
) -> Result<(f64, Vec<(usize, f64)>), EstimationError> {
    let invalid = |reason: &str| EstimationError::InvalidMeasurement { id: m.id.clone(), reason: reason.to_string() };
    check(graph, m).map_err(invalid)?;
    let (s, derivs) = match (m.kind, m.location) {
        (MeasurementKind::VMagnitude, MeasurementLocation::Bus(b)) => {
            let p = graph.bus_position(b).ok_or_else(|| invalid("unknown bus"))?;
            let col = model.voltage_col[p].ok_or_else(|| invalid("bus is de-energized"))?;
            return Ok((vm[p], vec![(col, 1.0)]));
        }
        (_, MeasurementLocation::Bus(b)) => {
            let p = graph.bus_position(b).ok_or_else(|| invalid("unknown bus"))?;
            let mut terms = Vec::with_capacity(model.neighbours[p].len() + 1);
            terms.push((p, model.admittance.self_terms[p]));
            terms.extend_from_slice(&model.neighbours[p]);
            port(p, &terms, e, vm)
        }
        (_, MeasurementLocation::Branch { branch, end }) => {
            let pos = graph.branch_position(branch).ok_or_else(|| invalid("unknown branch"))?;
            let two_port = model
                .admittance
                .branches
                .iter()
                .find(|b| b.branch == pos)
                .ok_or_else(|| invalid("branch out of service"))?;
            match end {
                BranchEnd::From => port(two_port.from, &[(two_port.from, two_port.y_ff), (two_port.to, two_port.y_ft)], e, vm),
                BranchEnd::To => port(two_port.to, &[(two_port.to, two_port.y_tt), (two_port.from, two_port.y_tf)], e, vm),
            }
        }
    };
    let reactive = matches!(m.kind, MeasurementKind::QInjection | MeasurementKind::QFlow);
    let part = |z: Complex64| if reactive { z.im } else { z.re };
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * derivs.len());
    for (bus, d_theta, d_v) in derivs {
        let (ac, vc) = model.columns(bus);
        if let Some(c) = ac {
            row.push((c, part(d_theta)));
        }
        if let Some(c) = vc {
            row.push((c, part(d_v)));
        }
    }
    row.sort_unstable_by_key(|&(c, _)| c);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match merged.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => merged.push((c, v)),
        }
    }
    Ok((part(s), merged))
}

/// `Hᵀ·R⁻¹·H` on the union of row-pair patterns.
pub fn gain_matrix(n: usize, jac: &MeasurementJacobian, meas: &[Measurement]) -> Result<SparseSystem, FactorError> {
    let mut triplets = Vec::new();
    for (row, m) in jac.rows.iter().zip(meas) {
        let w = 1.0 / (m.sigma * m.sigma);
        for &(c1, v1) in row {
            for &(c2, v2) in row {
                triplets.push((c1, c2, w * v1 * v2));
            }
        }
    }
    SparseSystem::from_triplets(n, triplets)
}

/// Gain factors kept for reuse on the next snapshot.
#[derive(Debug)]
pub struct GainFactors {
    pub layout: StateLayout,
    /// `(kind, location, sigma)` per measurement the gain was built from.
    signature: Vec<(MeasurementKind, MeasurementLocation, u64)>,
    pub factors: NumericFactors,
}

fn signature(meas: &[Measurement]) -> Vec<(MeasurementKind, MeasurementLocation, u64)> {
    meas.iter().map(|m| (m.kind, m.location, m.sigma.to_bits())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOLERANCE, max_iter: DEFAULT_MAX_ITERATIONS }
    }
}

/// Stage times in seconds; `iterations` is a count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeTimings {
    pub total: f64,
    pub gain_formulation: f64,
    pub gain_lu: f64,
    pub iterations: usize,
    pub rhs_update: f64,
    pub fb_substitution: f64,
    pub state_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResidual {
    pub id: String,
    pub z: f64,
    pub h: f64,
    /// `(z − h)/σ`.
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub state: StateVector,
    pub converged: bool,
    pub iterations: usize,
    /// `‖Δx‖∞` after each iteration.
    pub step_history: Vec<f64>,
    pub warm_started: bool,
    pub gain_formulations: usize,
    pub gain_factorizations: usize,
    pub timings: SeTimings,
    /// One entry per measurement used, in input order.
    pub residuals: Vec<MeasurementResidual>,
    #[serde(skip)]
    pub gain: Option<Arc<GainFactors>>,
}

impl EstimationResult {
    pub fn final_step(&self) -> f64 {
        self.step_history.last().copied().unwrap_or(0.0)
    }
}

/// Previous snapshot's result and whether topology changed since.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart<'a> {
    pub previous: &'a EstimationResult,
    pub topology_changed: bool,
}

pub fn estimate(
    graph: &BusBranchGraph,
    meas: &[Measurement],
    warm: Option<WarmStart<'_>>,
    opts: &SeOptions,
) -> Result<EstimationResult, EstimationError> {
    let start = Instant::now();
    let model = SeModel::new(graph)?;
    let n = model.layout.len();
    let sig = signature(meas);
    let reusable = warm.filter(|w| !w.topology_changed).and_then(|w| {
        let gain = w.previous.gain.as_ref()?;
        let fits = gain.layout == model.layout && gain.signature == sig && w.previous.state.buses.len() == n - gain.layout.angle_buses.len();
        if !fits {
            tracing::warn!("previous gain does not fit the current model; formulating a fresh gain");
        }
        fits.then(|| (gain.clone(), w.previous.state.clone()))
    });

    let mut timings = SeTimings::default();
    let mut rhs_time = Duration::ZERO;
    let mut fb_time = Duration::ZERO;
    let mut update_time = Duration::ZERO;
    let warm_started = reusable.is_some();
    let (mut gain, mut x) = match reusable {
        Some((gain, x)) => (Some(gain), x),
        None => (None, model.flat_state(graph)),
    };
    let mut symbolic: Option<Arc<SymbolicStructure>> = None;
    let mut formulations = 0;

    let mut step_history = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let t = Instant::now();
        let j = evaluate_h(&model, graph, meas, &x)?;
        rhs_time += t.elapsed();

        if !warm_started {
            let t = Instant::now();
            let g = gain_matrix(n, &j, meas)?;
            timings.gain_formulation += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let sym = match &symbolic {
                Some(s) => s.clone(),
                None => symbolic.insert(Arc::new(symbolic_analyze(&g, &order(&g))?)).clone(),
            };
            let factors = factor_gain(&g, &sym, &model, graph)?;
            timings.gain_lu += t.elapsed().as_secs_f64();
            formulations += 1;
            gain = Some(Arc::new(GainFactors { layout: model.layout.clone(), signature: sig.clone(), factors }));
        }
        let factors = &gain.as_ref().expect("gain formed or reused").factors;

        let t = Instant::now();
        let mut rhs = vec![0.0; n];
        for ((row, m), h) in j.rows.iter().zip(meas).zip(&j.h) {
            let wr = (m.z - h) / (m.sigma * m.sigma);
            for &(c, v) in row {
                rhs[c] += v * wr;
            }
        }
        rhs_time += t.elapsed();

        let t = Instant::now();
        factors.solve_in_place(&mut rhs)?;
        fb_time += t.elapsed();

        let t = Instant::now();
        let mut values = model.layout.pack(&x).expect("state follows the layout");
        for (v, d) in values.iter_mut().zip(&rhs) {
            *v += d;
        }
        model.layout.unpack(&values, &mut x);
        let step = rhs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        update_time += t.elapsed();

        step_history.push(step);
        if step < opts.tol {
            converged = true;
            break;
        }
    }
    let fin = evaluate_h(&model, graph, meas, &x)?;
    let residuals = meas
        .iter()
        .zip(&fin.h)
        .map(|(m, &h)| MeasurementResidual { id: m.id.clone(), z: m.z, h, normalized: (m.z - h) / m.sigma })
        .collect();
    timings.iterations = step_history.len();
    timings.rhs_update = rhs_time.as_secs_f64();
    timings.fb_substitution = fb_time.as_secs_f64();
    timings.state_update = update_time.as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();
    Ok(EstimationResult {
        state: x,
        converged,
        iterations: step_history.len(),
        step_history,
        warm_started,
        gain_formulations: formulations,
        gain_factorizations: formulations,
        timings,
        residuals,
        gain,
    })
}

fn factor_gain(
    g: &SparseSystem,
    sym: &Arc<SymbolicStructure>,
    model: &SeModel,
    graph: &BusBranchGraph,
) -> Result<NumericFactors, EstimationError> {
    factorize(g, sym).map_err(|e| match e {
        FactorError::SingularPivot { vertex, .. } => {
            let bus = if vertex < model.layout.angle_buses.len() {
                model.layout.angle_buses[vertex]
            } else {
                model.layout.voltage_buses[vertex - model.layout.angle_buses.len()]
            };
            let pos = graph.bus_position(bus).expect("layout bus in graph");
            EstimationError::Unobservable { island: graph.islands().label[pos] }
        }
        other => other.into(),
    })
}

/// Weighted residual statistics of a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `(id, (z − h)/σ)` per measurement.
    pub normalized: Vec<(String, f64)>,
    /// `J(x) = Σ ((z − h)/σ)²`.
    pub objective: f64,
    /// Measurement with the largest `|(z − h)/σ|`.
    pub largest: Option<(String, f64)>,
}

pub fn residual_report(res: &EstimationResult, meas: &[Measurement]) -> ResidualReport {
    let normalized: Vec<(String, f64)> = res
        .residuals
        .iter()
        .zip(meas)
        .map(|(r, m)| (m.id.clone(), (m.z - r.h) / m.sigma))
        .collect();
    let objective = normalized.iter().map(|(_, r)| r * r).sum();
    let largest = normalized
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .cloned();
    ResidualReport { normalized, objective, largest }
}

/// Measurements equal to `h(x)` at `x` for every meter of `template`.
pub fn synthesize(
    graph: &BusBranchGraph,
    template: &[Measurement],
    x: &StateVector,
) -> Result<Vec<Measurement>, EstimationError> {
    let model = SeModel::new(graph)?;
    let jac = evaluate_h(&model, graph, template, x)?;
    Ok(template.iter().zip(jac.h).map(|(m, z)| Measurement { z, ..m.clone() }).collect())
}

/// Voltage and injection meters at every energized bus plus both-end flow
/// meters on every in-service branch, valued zero.
pub fn full_placement(graph: &BusBranchGraph) -> Vec<Measurement> {
    let mut out = Vec::new();
    for (_, bus) in graph.energized_buses() {
        for kind in [MeasurementKind::VMagnitude, MeasurementKind::PInjection, MeasurementKind::QInjection] {
            out.push(Measurement {
                id: format!("{}.{}", kind_tag(kind), bus.id),
                kind,
                location: MeasurementLocation::Bus(bus.id),
                z: 0.0,
                sigma: kind.default_sigma(),
            });
        }
    }
    for br in graph.branches() {
        if !br.in_service() || !graph.is_energized(graph.bus_position(br.from).expect("validated")) {
            continue;
        }
        for end in [BranchEnd::From, BranchEnd::To] {
            for kind in [MeasurementKind::PFlow, MeasurementKind::QFlow] {
                let tag = if end == BranchEnd::From { "F" } else { "T" };
                out.push(Measurement {
                    id: format!("{}.{}.{tag}", kind_tag(kind), br.id),
                    kind,
                    location: MeasurementLocation::Branch { branch: br.id, end },
                    z: 0.0,
                    sigma: kind.default_sigma(),
                });
            }
        }
    }
    out
}

fn kind_tag(kind: MeasurementKind) -> &'static str {
    match kind {
        MeasurementKind::VMagnitude => "V",
        MeasurementKind::PInjection => "P",
        MeasurementKind::QInjection => "Q",
        MeasurementKind::PFlow => "PF",
        MeasurementKind::QFlow => "QF",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{Branch, Bus, VoltageBand};

    fn two_bus(x: f64) -> BusBranchGraph {
        let mut slack = Bus::new(1, BusType::Slack);
        slack.slack_candidate = true;
        BusBranchGraph::new(
            100.0,
            VoltageBand::default(),
            vec![slack, Bus::new(2, BusType::PQ)],
            vec![Branch::new(1, 1, 2, 0.0, x, 0.0)],
            Vec::new(),
        )
        .unwrap()
    }

    #[test]
    fn voltage_row_is_unit() {
        let g = two_bus(0.1);
        let model = SeModel::new(&g).unwrap();
        let m = Measurement {
            id: "V".into(),
            kind: MeasurementKind::VMagnitude,
            location: MeasurementLocation::Bus(BusId(2)),
            z: 1.0,
            sigma: 0.004,
        };
        let x = model.flat_state(&g);
        let jac = evaluate_h(&model, &g, &[m], &x).unwrap();
        assert_eq!(jac.h, vec![1.0]);
        assert_eq!(jac.rows[0], vec![(model.layout.len() - 1, 1.0)]);
    }

    #[test]
    fn flat_lossless_flow_is_zero() {
        let g = two_bus(0.1);
        let model = SeModel::new(&g).unwrap();
        let m = Measurement {
            id: "PF".into(),
            kind: MeasurementKind::PFlow,
            location: MeasurementLocation::Branch { branch: BranchId(1), end: BranchEnd::From },
            z: 0.0,
            sigma: 0.01,
        };
        let jac = evaluate_h(&model, &g, &[m], &model.flat_state(&g)).unwrap();
        assert!(jac.h[0].abs() < 1e-15);
    }

    #[test]
    fn unobservable_island_is_named() {
        let g = two_bus(0.1);
        let meas = vec![Measurement {
            id: "V1".into(),
            kind: MeasurementKind::VMagnitude,
            location: MeasurementLocation::Bus(BusId(1)),
            z: 1.0,
            sigma: 0.004,
        }];
        match estimate(&g, &meas, None, &SeOptions::default()) {
            Err(EstimationError::Unobservable { island }) => assert_eq!(island, BusId(1)),
            other => panic!("{other:?}"),
        }
    }
}

//! Per-snapshot orchestration: apply the delta, process topology, estimate,
//! solve the power flow and optionally screen contingencies.

use std::sync::Arc;
use std::time::Instant;

use ems_core::contingency::{run_all, BaseCase, CaOptions};
use ems_core::estimation::{estimate, resolve_measurements, residual_report, EstimationResult, SeOptions, WarmStart};
use ems_core::grid_model::{BusBranchGraph, ChangeSet, EvolvingSequence, GridState, SnapshotDelta, Timestamp};
use ems_core::ntp::{full_ntp, incremental_ntp};
use ems_core::powerflow::{fdpf_solve_with, DecoupledSystem, FdpfOptions, PowerFlowResult};

use crate::report::{
    CaSummary, NtpSummary, PfSummary, SeSummary, SnapshotReport, Stage, StageFailure, StageSeconds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub se: bool,
    pub pf: bool,
    pub ca: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self { se: true, pf: true, ca: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub stages: Stages,
    /// Reuse the previous gain factors when topology is unchanged.
    pub warm: bool,
    /// Reuse the previous power-flow factors when topology is unchanged.
    pub reuse_pf: bool,
    pub se: SeOptions,
    pub pf: FdpfOptions,
    pub ca: CaOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            stages: Stages::default(),
            warm: true,
            reuse_pf: true,
            se: SeOptions::default(),
            pf: FdpfOptions::default(),
            ca: CaOptions::default(),
        }
    }
}

/// What one processed snapshot leaves behind for the next.
#[derive(Debug)]
pub struct Artifacts {
    pub graph: BusBranchGraph,
    pub system: Option<Arc<DecoupledSystem>>,
    pub se: Option<Arc<EstimationResult>>,
    pub pf: Option<Arc<PowerFlowResult>>,
}

pub struct Pipeline {
    seq: EvolvingSequence<Artifacts>,
    opts: PipelineOptions,
    /// Topology changed since the estimate held in the latest artifacts.
    se_topology_stale: bool,
    pf_topology_stale: bool,
}

impl Pipeline {
    pub fn new(base: GridState, opts: PipelineOptions) -> Self {
        Self { seq: EvolvingSequence::new(base).with_retention(2), opts, se_topology_stale: true, pf_topology_stale: true }
    }

    pub fn head(&self) -> &GridState {
        self.seq.head()
    }

    pub fn sequence(&self) -> &EvolvingSequence<Artifacts> {
        &self.seq
    }

    pub fn latest(&self) -> Option<&Arc<Artifacts>> {
        self.seq.latest_artifacts().map(|(_, a)| a)
    }

    /// Processes one delta. Stage failures are recorded in the report; a
    /// rejected delta leaves the sequence at its previous snapshot.
    pub fn process(&mut self, delta: SnapshotDelta) -> SnapshotReport {
        let received = Instant::now();
        let t = delta.t;
        let mut secs = StageSeconds::default();
        let mut failures = Vec::new();
        let mut fail = |stage: Stage, message: String| {
            tracing::warn!(t, ?stage, %message, "stage failed");
            failures.push(StageFailure { stage, message });
        };

        let clock = Instant::now();
        let applied = self.seq.apply_delta(delta);
        secs.apply = clock.elapsed().as_secs_f64();
        let changes = match applied {
            Ok(c) => c,
            Err(e) => {
                fail(Stage::Apply, e.to_string());
                return SnapshotReport {
                    t,
                    topology_changed: false,
                    ntp: None,
                    se: None,
                    pf: None,
                    ca: None,
                    failures,
                    stage_seconds: secs,
                    latency_seconds: received.elapsed().as_secs_f64(),
                };
            }
        };

        self.analyse(t, &changes, received, secs, failures)
    }

    /// Analyses the current head with no delta applied: full topology
    /// processing and a cold estimate when nothing was processed before.
    pub fn initialize(&mut self) -> SnapshotReport {
        let received = Instant::now();
        let t = self.seq.head().t;
        self.analyse(t, &ChangeSet::default(), received, StageSeconds::default(), Vec::new())
    }

    fn analyse(
        &mut self,
        t: Timestamp,
        changes: &ChangeSet,
        received: Instant,
        mut secs: StageSeconds,
        mut failures: Vec<StageFailure>,
    ) -> SnapshotReport {
        let mut fail = |stage: Stage, message: String| {
            tracing::warn!(t, ?stage, %message, "stage failed");
            failures.push(StageFailure { stage, message });
        };
        let prev = self.latest().cloned();
        let clock = Instant::now();
        let (graph, ntp, topology_changed) = self.topology(prev.as_deref(), changes);
        secs.ntp = clock.elapsed().as_secs_f64();
        self.se_topology_stale |= topology_changed;
        self.pf_topology_stale |= topology_changed;

        let mut se_out = prev.as_ref().and_then(|p| p.se.clone());
        let mut se_summary = None;
        let mut fresh_se = None;
        if self.opts.stages.se {
            let clock = Instant::now();
            match self.estimate(&graph, se_out.as_deref()) {
                Ok((res, summary)) => {
                    if !res.converged {
                        fail(Stage::Se, format!("not converged after {} iterations (step {:.3e})", res.iterations, res.final_step()));
                    } else {
                        let res = Arc::new(res);
                        fresh_se = Some(Arc::clone(&res));
                        se_out = Some(res);
                        self.se_topology_stale = false;
                    }
                    se_summary = Some(summary);
                }
                Err(e) => fail(Stage::Se, e.to_string()),
            }
            secs.se = clock.elapsed().as_secs_f64();
        }

        let mut system = prev.as_ref().and_then(|p| p.system.clone());
        let mut pf_out = prev.as_ref().and_then(|p| p.pf.clone());
        let mut pf_summary = None;
        if self.opts.stages.pf {
            let clock = Instant::now();
            let seed = fresh_se.as_ref().map(|r| r.state.clone()).or_else(|| pf_out.as_ref().map(|r| r.state.clone()));
            let reuse = self.opts.reuse_pf && !self.pf_topology_stale;
            let built = match system.clone().filter(|_| reuse) {
                Some(s) => Ok(s),
                None => DecoupledSystem::build(&graph).map(Arc::new),
            };
            match built.and_then(|sys| fdpf_solve_with(&sys, &graph, seed.as_ref(), &self.opts.pf).map(|r| (sys, r))) {
                Ok((sys, res)) => {
                    system = Some(sys);
                    self.pf_topology_stale = false;
                    if !res.converged {
                        fail(Stage::Pf, format!("not converged (mismatch {:.3e})", res.final_mismatch()));
                    }
                    pf_summary = Some(PfSummary {
                        converged: res.converged,
                        p_iterations: res.p_iterations,
                        q_iterations: res.q_iterations,
                        final_mismatch: res.final_mismatch(),
                        symbolic_runs: res.symbolic_runs,
                        extreme_q: res.extreme_q.clone(),
                        timings: res.timings,
                        state: res.state.clone(),
                    });
                    if res.converged {
                        pf_out = Some(Arc::new(res));
                    }
                }
                Err(e) => fail(Stage::Pf, e.to_string()),
            }
            secs.pf = clock.elapsed().as_secs_f64();
        }

        let mut ca_summary = None;
        if self.opts.stages.ca {
            let clock = Instant::now();
            match BaseCase::solve(graph.clone(), &self.opts.pf).and_then(|base| run_all(&base, &self.opts.ca)) {
                Ok(rep) => {
                    ca_summary = Some(CaSummary {
                        cases_enumerated: rep.cases_enumerated,
                        cases_run: rep.cases_run,
                        cases_screened: rep.cases_screened,
                        alerts: rep.alerts,
                        violations: rep.cases.iter().map(|c| c.violations.len()).sum(),
                        symbolic_runs: rep.symbolic_runs,
                        total_seconds: rep.total_seconds,
                    })
                }
                Err(e) => fail(Stage::Ca, e.to_string()),
            }
            secs.ca = clock.elapsed().as_secs_f64();
        }

        self.seq.commit(t, Artifacts { graph, system, se: se_out, pf: pf_out });
        SnapshotReport {
            t,
            topology_changed,
            ntp: Some(ntp),
            se: se_summary,
            pf: pf_summary,
            ca: ca_summary,
            failures,
            stage_seconds: secs,
            latency_seconds: received.elapsed().as_secs_f64(),
        }
    }

    fn topology(&self, prev: Option<&Artifacts>, changes: &ChangeSet) -> (BusBranchGraph, NtpSummary, bool) {
        let grid = &self.seq.head().grid;
        let (graph, incremental, changed, rebuilt, fell_back) = match prev {
            None => {
                let g = full_ntp(grid);
                (g, false, true, grid.substations().len(), false)
            }
            Some(p) => {
                let out = incremental_ntp(&p.graph, grid, changes);
                (out.graph, true, out.topology_changed, out.rebuilt_substations.len(), out.fell_back_to_full)
            }
        };
        let summary = NtpSummary {
            incremental,
            buses: graph.buses().len(),
            branches: graph.branches().iter().filter(|b| b.in_service()).count(),
            islands: graph.islands().island_count(),
            energized_buses: graph.energized_buses().count(),
            rebuilt_substations: rebuilt,
            fell_back_to_full: fell_back,
        };
        (graph, summary, changed)
    }

    fn estimate(
        &self,
        graph: &BusBranchGraph,
        previous: Option<&EstimationResult>,
    ) -> Result<(EstimationResult, SeSummary), ems_core::estimation::EstimationError> {
        let head = self.seq.head();
        let (meas, excluded) = resolve_measurements(&head.grid, graph, &head.measurements);
        let warm = previous
            .filter(|_| self.opts.warm)
            .map(|p| WarmStart { previous: p, topology_changed: self.se_topology_stale });
        let res = estimate(graph, &meas, warm, &self.opts.se)?;
        let rep = residual_report(&res, &meas);
        let summary = SeSummary {
            converged: res.converged,
            iterations: res.iterations,
            final_step: res.final_step(),
            warm_started: res.warm_started,
            gain_formulations: res.gain_formulations,
            gain_factorizations: res.gain_factorizations,
            measurements_used: meas.len(),
            measurements_excluded: excluded.len(),
            objective: rep.objective,
            largest_residual: rep.largest,
            timings: res.timings,
            state: res.state.clone(),
        };
        Ok((res, summary))
    }
}

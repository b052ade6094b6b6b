//! Repeated pipeline runs summarized per stage.

use std::time::Instant;

use anyhow::Result;
use ems_core::contingency::{run_all, BaseCase, CaOptions};
use ems_core::grid_model::{GridState, SnapshotDelta};
use ems_core::ntp::full_ntp;
use serde::{Deserialize, Serialize};

use crate::pipeline::{Pipeline, PipelineOptions};
use crate::report::SnapshotReport;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub samples: usize,
    pub median: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

/// Median and nearest-rank 95th percentile.
pub fn stats(values: &[f64]) -> Stats {
    if values.is_empty() {
        return Stats::default();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Stats { samples: n, median, p95: v[rank - 1], min: v[0], max: v[n - 1] }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub apply: Stats,
    pub ntp: Stats,
    pub se: Stats,
    pub pf: Stats,
    pub ca: Stats,
    /// Whole snapshot, delta receipt to report.
    pub cycle: Stats,
    /// Per run: the sum of all snapshot cycles.
    pub run_total: Stats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub warm_median: f64,
    pub cold_median: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaReuseStats {
    pub reuse: Stats,
    pub no_reuse: Stats,
    /// `reuse.median / no_reuse.median`.
    pub ratio: f64,
    pub same_violations: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub repeats: usize,
    pub snapshots: usize,
    pub stages: StageStats,
    pub se_iterations: IterationStats,
    pub ca_reuse: Option<CaReuseStats>,
    pub failures: usize,
}

/// Runs the base snapshot plus every delta through a fresh pipeline.
pub fn run_once(base: &GridState, deltas: &[SnapshotDelta], opts: PipelineOptions) -> Vec<SnapshotReport> {
    let mut p = Pipeline::new(base.clone(), opts);
    p.initialize();
    deltas.iter().map(|d| p.process(d.clone())).collect()
}

fn column(reports: &[SnapshotReport], f: impl Fn(&SnapshotReport) -> f64) -> Vec<f64> {
    reports.iter().map(f).collect()
}

/// Median SE iterations over snapshots whose estimate ran.
fn median_iterations(reports: &[SnapshotReport], warm: bool) -> f64 {
    let it: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.se.as_ref())
        .filter(|s| s.warm_started == warm)
        .map(|s| s.iterations as f64)
        .collect();
    stats(&it).median
}

/// Times N-1 analysis of `base` with reuse on and off, `repeats` times each.
pub fn ca_reuse(base: &GridState, opts: &CaOptions, repeats: usize) -> Result<CaReuseStats> {
    let graph = full_ntp(&base.grid);
    let mut on = Vec::new();
    let mut off = Vec::new();
    let mut same = true;
    for _ in 0..repeats.max(1) {
        let mut sets = Vec::new();
        for (reuse, out) in [(true, &mut on), (false, &mut off)] {
            let clock = Instant::now();
            let bc = BaseCase::solve(graph.clone(), &opts.fdpf)?;
            let rep = run_all(&bc, &CaOptions { reuse, ..*opts })?;
            out.push(clock.elapsed().as_secs_f64());
            sets.push(rep.violation_set());
        }
        same &= sets[0] == sets[1];
    }
    let (reuse, no_reuse) = (stats(&on), stats(&off));
    Ok(CaReuseStats { ratio: reuse.median / no_reuse.median, reuse, no_reuse, same_violations: same })
}

pub fn bench(base: &GridState, deltas: &[SnapshotDelta], opts: PipelineOptions, repeats: usize) -> Result<BenchSummary> {
    let repeats = repeats.max(1);
    let mut all = Vec::new();
    let mut totals = Vec::new();
    for _ in 0..repeats {
        let reports = run_once(base, deltas, opts);
        totals.push(reports.iter().map(|r| r.latency_seconds).sum());
        all.extend(reports);
    }
    let stages = StageStats {
        apply: stats(&column(&all, |r| r.stage_seconds.apply)),
        ntp: stats(&column(&all, |r| r.stage_seconds.ntp)),
        se: stats(&column(&all, |r| r.stage_seconds.se)),
        pf: stats(&column(&all, |r| r.stage_seconds.pf)),
        ca: stats(&column(&all, |r| r.stage_seconds.ca)),
        cycle: stats(&column(&all, |r| r.latency_seconds)),
        run_total: stats(&totals),
    };
    let warm = run_once(base, deltas, PipelineOptions { warm: true, ..opts });
    let cold = run_once(base, deltas, PipelineOptions { warm: false, ..opts });
    let se_iterations =
        IterationStats { warm_median: median_iterations(&warm, true), cold_median: median_iterations(&cold, false) };
    let ca_reuse = opts.stages.ca.then(|| ca_reuse(base, &opts.ca, repeats)).transpose()?;
    Ok(BenchSummary {
        repeats,
        snapshots: deltas.len(),
        failures: all.iter().filter(|r| !r.failures.is_empty()).count(),
        stages,
        se_iterations,
        ca_reuse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_small_samples() {
        let s = stats(&[3.0]);
        assert_eq!((s.median, s.p95, s.min, s.max), (3.0, 3.0, 3.0, 3.0));
        let s = stats(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!((s.median, s.p95), (2.5, 4.0));
        assert_eq!(stats(&[]).samples, 0);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(stats(&v).p95, 95.0);
    }
}

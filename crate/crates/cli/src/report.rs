//! Per-snapshot reports and their on-disk forms.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ems_core::cime_io::{read_jsonl, JsonlWriter};
use ems_core::estimation::SeTimings;
use ems_core::grid_model::{BusId, StateVector, Timestamp};
use ems_core::powerflow::PfTimings;
use serde::{Deserialize, Serialize};

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const SE_TIMING_FILE: &str = "timing_se.csv";
pub const PF_TIMING_FILE: &str = "timing_pf.csv";

pub const SE_TIMING_HEADER: [&str; 8] =
    ["t", "Total", "Gain Formulation", "Gain LU", "Iterations", "RHS Update", "F/B Substitution", "State Update"];
pub const PF_TIMING_HEADER: [&str; 6] =
    ["t", "Initialization", "Symbolic Analysis", "Numerical Factorization", "Solve", "Total"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Apply,
    Ntp,
    Se,
    Pf,
    Ca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

/// Wall time per stage, seconds; zero for stages that did not run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSeconds {
    pub apply: f64,
    pub ntp: f64,
    pub se: f64,
    pub pf: f64,
    pub ca: f64,
}

impl StageSeconds {
    pub fn sum(&self) -> f64 {
        self.apply + self.ntp + self.se + self.pf + self.ca
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtpSummary {
    pub incremental: bool,
    pub buses: usize,
    pub branches: usize,
    pub islands: usize,
    pub energized_buses: usize,
    pub rebuilt_substations: usize,
    pub fell_back_to_full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_step: f64,
    pub warm_started: bool,
    pub gain_formulations: usize,
    pub gain_factorizations: usize,
    pub measurements_used: usize,
    pub measurements_excluded: usize,
    pub objective: f64,
    pub largest_residual: Option<(String, f64)>,
    pub timings: SeTimings,
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSummary {
    pub converged: bool,
    pub p_iterations: usize,
    pub q_iterations: usize,
    pub final_mismatch: f64,
    pub symbolic_runs: usize,
    pub extreme_q: Vec<BusId>,
    pub timings: PfTimings,
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaSummary {
    pub cases_enumerated: usize,
    pub cases_run: usize,
    pub cases_screened: usize,
    pub alerts: usize,
    pub violations: usize,
    pub symbolic_runs: usize,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotReport {
    pub t: Timestamp,
    pub topology_changed: bool,
    pub ntp: Option<NtpSummary>,
    pub se: Option<SeSummary>,
    pub pf: Option<PfSummary>,
    pub ca: Option<CaSummary>,
    pub failures: Vec<StageFailure>,
    pub stage_seconds: StageSeconds,
    /// From delta receipt to the finished report.
    pub latency_seconds: f64,
}

impl SnapshotReport {
    /// The report with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.stage_seconds = StageSeconds::default();
        r.latency_seconds = 0.0;
        if let Some(se) = r.se.as_mut() {
            se.timings = SeTimings { iterations: se.timings.iterations, ..Default::default() };
        }
        if let Some(pf) = r.pf.as_mut() {
            pf.timings = PfTimings::default();
        }
        if let Some(ca) = r.ca.as_mut() {
            ca.total_seconds = 0.0;
        }
        r
    }
}

/// Appends reports to `reports.jsonl`, `timing_se.csv` and `timing_pf.csv`.
/// Every row is flushed as written, so an interrupted run leaves whole rows.
pub struct ReportSink {
    dir: PathBuf,
    jsonl: JsonlWriter<File>,
    se: csv::Writer<File>,
    pf: csv::Writer<File>,
}

fn open_append(path: &Path) -> Result<(File, bool)> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    Ok((file, fresh))
}

impl ReportSink {
    /// Opens (creating if needed) the output files in `dir`. Headers are
    /// written to new or empty files only.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let (jsonl, _) = open_append(&dir.join(REPORTS_FILE))?;
        let (se_file, se_fresh) = open_append(&dir.join(SE_TIMING_FILE))?;
        let (pf_file, pf_fresh) = open_append(&dir.join(PF_TIMING_FILE))?;
        let mut se = csv::Writer::from_writer(se_file);
        let mut pf = csv::Writer::from_writer(pf_file);
        if se_fresh {
            se.write_record(SE_TIMING_HEADER)?;
            se.flush()?;
        }
        if pf_fresh {
            pf.write_record(PF_TIMING_HEADER)?;
            pf.flush()?;
        }
        Ok(Self { dir: dir.to_path_buf(), jsonl: JsonlWriter::new(jsonl), se, pf })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, report: &SnapshotReport) -> Result<()> {
        self.jsonl.write(report)?;
        if let Some(se) = &report.se {
            self.write_se_timing(report.t, &se.timings)?;
        }
        if let Some(pf) = &report.pf {
            self.write_pf_timing(report.t, &pf.timings)?;
        }
        Ok(())
    }

    pub fn write_se_timing(&mut self, t: Timestamp, s: &SeTimings) -> Result<()> {
        self.se.write_record([
            t.to_string(),
            s.total.to_string(),
            s.gain_formulation.to_string(),
            s.gain_lu.to_string(),
            s.iterations.to_string(),
            s.rhs_update.to_string(),
            s.fb_substitution.to_string(),
            s.state_update.to_string(),
        ])?;
        self.se.flush()?;
        Ok(())
    }

    pub fn write_pf_timing(&mut self, t: Timestamp, p: &PfTimings) -> Result<()> {
        self.pf.write_record([
            t.to_string(),
            p.initialization.to_string(),
            p.symbolic_analysis.to_string(),
            p.numerical_factorization.to_string(),
            p.solve.to_string(),
            p.total.to_string(),
        ])?;
        self.pf.flush()?;
        Ok(())
    }

    /// Appends an arbitrary JSON document to the report stream.
    pub fn write_json<T: Serialize>(&mut self, item: &T) -> Result<()> {
        self.jsonl.write(item)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.se.flush()?;
        self.pf.flush()?;
        self.jsonl.into_inner().sync_all()?;
        Ok(())
    }
}

pub fn read_reports(path: &Path) -> Result<Vec<SnapshotReport>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(file))?)
}

/// Writes `rows` as a CSV file with a header from the row type.
pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    ems_core::cime_io::write_csv(&mut file, rows)?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_leaves_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        ReportSink::open(dir.path()).unwrap().finish().unwrap();
        let se = std::fs::read_to_string(dir.path().join(SE_TIMING_FILE)).unwrap();
        assert_eq!(se, "t,Total,Gain Formulation,Gain LU,Iterations,RHS Update,F/B Substitution,State Update\n");
        let pf = std::fs::read_to_string(dir.path().join(PF_TIMING_FILE)).unwrap();
        assert_eq!(pf, "t,Initialization,Symbolic Analysis,Numerical Factorization,Solve,Total\n");
        assert!(read_reports(&dir.path().join(REPORTS_FILE)).unwrap().is_empty());
        // reopening appends without a second header
        ReportSink::open(dir.path()).unwrap().finish().unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join(SE_TIMING_FILE)).unwrap(), se);
    }
}

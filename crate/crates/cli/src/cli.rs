//! Argument definitions and subcommand implementations of `ems`.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ems_core::cases::{self, full_measurement_set, synthetic_grid};
use ems_core::cime_io::{
    parse_grid, read_delta_stream, serialize_delta_stream, serialize_grid, write_state_csv, ReplayClient,
    ReplayConfig, ReplayServer,
};
use ems_core::contingency::{run_all, BaseCase, CaOptions, ContingencyReport, Scheme};
use ems_core::estimation::SeOptions;
use ems_core::grid_model::{BusBranchGraph, GridState, SnapshotDelta};
use ems_core::ntp::{full_ntp, incremental_ntp};
use ems_core::powerflow::FdpfOptions;
use serde::Serialize;

use crate::bench::bench;
use crate::pipeline::{Pipeline, PipelineOptions, Stages};
use crate::report::{write_csv_file, ReportSink, SnapshotReport, REPORTS_FILE};
use crate::scenario::{build_scenario, ScenarioOptions};

/// Environment variable naming the output directory.
pub const OUT_DIR_ENV: &str = "EMS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ems", version, about = "Snapshot-driven grid analysis: topology, estimation, power flow, N-1")]
pub struct Cli {
    /// Directory for reports and tables.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "ems-out")]
    pub out_dir: PathBuf,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bus-branch model of the grid after the deltas.
    Ntp(NtpArgs),
    /// State estimation per snapshot.
    Se(SeArgs),
    /// Fast-decoupled power flow per snapshot.
    Pf(PfArgs),
    /// N-1 contingency analysis of the last snapshot.
    Ca(CaArgs),
    /// Full pipeline over a delta file or a replay stream.
    Run(RunArgs),
    /// Repeated pipeline runs with per-stage statistics.
    Bench(BenchArgs),
    /// Serve a delta file over TCP.
    Replay(ReplayArgs),
    /// Write a bundled or generated case and a synthetic delta stream.
    ExportCase(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Input {
    /// Grid file (`.gride`).
    #[arg(long)]
    pub grid: PathBuf,
    /// Delta stream file (`.deltas`).
    #[arg(long)]
    pub deltas: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NtpMode {
    Full,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct NtpArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long, value_enum, default_value = "incremental")]
    pub mode: NtpMode,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SeFlags {
    /// Reuse the previous gain factors while topology is unchanged (default).
    #[arg(long, overrides_with = "cold")]
    pub warm: bool,
    /// Re-form and refactorize the gain matrix at every snapshot.
    #[arg(long)]
    pub cold: bool,
    /// Estimation convergence threshold on the largest state step.
    #[arg(long, default_value_t = ems_core::estimation::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = ems_core::estimation::DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
}

impl SeFlags {
    fn options(&self) -> SeOptions {
        SeOptions { tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PfFlags {
    /// Power-flow mismatch threshold, per-unit.
    #[arg(long, default_value_t = ems_core::powerflow::DEFAULT_TOLERANCE)]
    pub pf_tol: f64,
    #[arg(long, default_value_t = ems_core::powerflow::DEFAULT_MAX_HALF_ITERATIONS)]
    pub pf_max_iter: usize,
}

impl PfFlags {
    fn options(&self) -> FdpfOptions {
        FdpfOptions { tol: self.pf_tol, max_half_iterations: self.pf_max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Fdpf,
    Pcg,
}

#[derive(Debug, Clone, Args)]
pub struct CaFlags {
    #[arg(long, value_enum, default_value = "fdpf")]
    pub scheme: SchemeArg,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Analyse and factorize every case from scratch.
    #[arg(long)]
    pub no_reuse: bool,
    /// Also take out each non-slack generator unit.
    #[arg(long)]
    pub generators: bool,
}

impl CaFlags {
    fn options(&self, fdpf: FdpfOptions) -> CaOptions {
        CaOptions {
            scheme: match self.scheme {
                SchemeArg::Fdpf => Scheme::Fdpf,
                SchemeArg::Pcg => Scheme::Pcg,
            },
            reuse: !self.no_reuse,
            jobs: self.jobs,
            include_generators: self.generators,
            fdpf,
            ..CaOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SeArgs {
    #[command(flatten)]
    pub input: Input,
    #[command(flatten)]
    pub se: SeFlags,
}

#[derive(Debug, Args)]
pub struct PfArgs {
    #[command(flatten)]
    pub input: Input,
    #[command(flatten)]
    pub pf: PfFlags,
}

#[derive(Debug, Args)]
pub struct CaArgs {
    #[command(flatten)]
    pub input: Input,
    #[command(flatten)]
    pub pf: PfFlags,
    #[command(flatten)]
    pub ca: CaFlags,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// Delta stream file.
    #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
    pub deltas: Option<PathBuf>,
    /// Replay server to read the delta stream from.
    #[arg(long)]
    pub connect: Option<SocketAddr>,
    /// Reconnect attempts after a dropped replay session.
    #[arg(long, default_value_t = 3)]
    pub reconnects: usize,
    /// Run contingency analysis on every snapshot.
    #[arg(long)]
    pub ca: bool,
    #[arg(long)]
    pub no_se: bool,
    #[arg(long)]
    pub no_pf: bool,
    #[command(flatten)]
    pub se: SeFlags,
    #[command(flatten)]
    pub pf: PfFlags,
    #[command(flatten)]
    pub ca_flags: CaFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Include contingency analysis and the reuse on/off comparison.
    #[arg(long)]
    pub ca: bool,
    #[command(flatten)]
    pub se: SeFlags,
    #[command(flatten)]
    pub pf: PfFlags,
    #[command(flatten)]
    pub ca_flags: CaFlags,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub deltas: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7070")]
    pub bind: String,
    /// Timestamp groups per second; unpaced when omitted.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// `ieee14`, `ieee30`, `ieee118` or `synthetic:<substations>[:<seed>]`.
    pub case: String,
    /// Grid file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a synthetic delta stream here.
    #[arg(long)]
    pub deltas: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub snapshots: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Meter noise in multiples of σ.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.01)]
    pub load_drift: f64,
    /// Open a line breaker every this many snapshots (0 = never).
    #[arg(long, default_value_t = 10)]
    pub switch_every: usize,
}

/// What a command did, for the exit code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub snapshots: usize,
    pub failed_snapshots: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.failed_snapshots > 0 {
            2
        } else {
            0
        }
    }
}

pub fn load_grid(path: &Path) -> Result<GridState> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file = parse_grid(&text).with_context(|| format!("{}", path.display()))?;
    Ok(GridState::new(0, file.grid, file.measurements))
}

pub fn load_deltas(path: &Path) -> Result<Vec<SnapshotDelta>> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    read_delta_stream(BufReader::new(file)).with_context(|| format!("{}", path.display()))
}

fn load_input(input: &Input) -> Result<(GridState, Vec<SnapshotDelta>)> {
    let mut base = load_grid(&input.grid)?;
    let deltas = match &input.deltas {
        Some(p) => load_deltas(p)?,
        None => Vec::new(),
    };
    if let Some(first) = deltas.first() {
        base.t = base.t.min(first.t);
    }
    Ok((base, deltas))
}

pub fn case_grid(name: &str) -> Result<ems_core::grid_model::NodeBreakerGraph> {
    let bundled = match name {
        "ieee14" => Some(cases::ieee14()),
        "ieee30" => Some(cases::ieee30()),
        "ieee118" => Some(cases::ieee118()),
        _ => None,
    };
    if let Some(case) = bundled {
        return Ok(case.node_breaker()?);
    }
    let mut parts = name.split(':');
    if parts.next() != Some("synthetic") {
        bail!("unknown case `{name}` (expected ieee14, ieee30, ieee118 or synthetic:<n>[:<seed>])");
    }
    let n: usize = parts.next().ok_or_else(|| anyhow!("synthetic case needs a size"))?.parse()?;
    let seed: u64 = parts.next().map(str::parse).transpose()?.unwrap_or(1);
    if n < 2 {
        bail!("a synthetic case needs at least two substations");
    }
    Ok(synthetic_grid(n, seed))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Ntp(a) => ntp(a, out),
        Command::Se(a) => {
            let opts = PipelineOptions {
                stages: Stages { se: true, pf: false, ca: false },
                warm: !a.se.cold,
                se: a.se.options(),
                ..Default::default()
            };
            staged(&a.input, opts, out, "se.jsonl", |r| r.se.as_ref().map(serde_json::to_value))
        }
        Command::Pf(a) => {
            let opts = PipelineOptions {
                stages: Stages { se: false, pf: true, ca: false },
                pf: a.pf.options(),
                ..Default::default()
            };
            staged(&a.input, opts, out, "pf.jsonl", |r| r.pf.as_ref().map(serde_json::to_value))
        }
        Command::Ca(a) => ca(a, out),
        Command::Run(a) => run(a, out),
        Command::Bench(a) => {
            let (base, deltas) = load_input(&a.input)?;
            let opts = PipelineOptions {
                stages: Stages { se: true, pf: true, ca: a.ca },
                warm: !a.se.cold,
                reuse_pf: !a.ca_flags.no_reuse,
                se: a.se.options(),
                pf: a.pf.options(),
                ca: a.ca_flags.options(a.pf.options()),
            };
            let summary = bench(&base, &deltas, opts, a.repeats)?;
            fs::create_dir_all(out)?;
            let path = out.join("bench.json");
            fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(Outcome { snapshots: deltas.len(), failed_snapshots: summary.failures })
        }
        Command::Replay(a) => {
            let deltas = load_deltas(&a.deltas)?;
            let server = ReplayServer::bind(a.bind.as_str()).with_context(|| format!("cannot bind {}", a.bind))?;
            eprintln!("serving {} snapshots on {}", deltas.len(), server.local_addr()?);
            let stats = server.serve(&deltas, &ReplayConfig { rate: a.rate, sessions: a.sessions, fault: None })?;
            eprintln!("sent {} groups, {} bytes in {} sessions", stats.groups_sent, stats.bytes_sent, stats.sessions);
            Ok(Outcome::default())
        }
        Command::ExportCase(a) => export(a),
    }
}

fn write_graph(g: &BusBranchGraph, format: Format, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    match format {
        Format::Json => {
            let path = out.join("bus_branch.json");
            fs::write(&path, serde_json::to_string_pretty(g)?)?;
            Ok(vec![path])
        }
        Format::Csv => {
            #[derive(Serialize)]
            struct BusRow<'a> {
                id: u32,
                name: &'a str,
                bus_type: String,
                island: u32,
                energized: bool,
                v: f64,
                p_inj: f64,
                q_inj: f64,
                g_shunt: f64,
                b_shunt: f64,
                members: usize,
            }
            #[derive(Serialize)]
            struct BranchRow<'a> {
                id: u32,
                name: &'a str,
                from: u32,
                to: u32,
                r: f64,
                x: f64,
                b: f64,
                tap: f64,
                rate: f64,
                in_service: bool,
            }
            let buses: Vec<BusRow> = g
                .buses()
                .iter()
                .enumerate()
                .map(|(i, b)| BusRow {
                    id: b.id.0,
                    name: &b.name,
                    bus_type: format!("{:?}", b.bus_type),
                    island: g.islands().label[i].0,
                    energized: g.is_energized(i),
                    v: b.v,
                    p_inj: b.p_inj,
                    q_inj: b.q_inj,
                    g_shunt: b.g_shunt,
                    b_shunt: b.b_shunt,
                    members: b.members.len(),
                })
                .collect();
            let branches: Vec<BranchRow> = g
                .branches()
                .iter()
                .map(|b| BranchRow {
                    id: b.id.0,
                    name: &b.name,
                    from: b.from.0,
                    to: b.to.0,
                    r: b.r,
                    x: b.x,
                    b: b.b,
                    tap: b.tap,
                    rate: b.rate,
                    in_service: b.in_service(),
                })
                .collect();
            let (bp, brp) = (out.join("buses.csv"), out.join("branches.csv"));
            write_csv_file(&bp, &buses)?;
            write_csv_file(&brp, &branches)?;
            Ok(vec![bp, brp])
        }
    }
}

fn ntp(a: &NtpArgs, out: &Path) -> Result<Outcome> {
    let (mut state, deltas) = load_input(&a.input)?;
    let mut graph = full_ntp(&state.grid);
    let mut failed = 0;
    for d in &deltas {
        match state.apply(d) {
            Ok(changes) if a.mode == NtpMode::Incremental => {
                let o = incremental_ntp(&graph, &state.grid, &changes);
                tracing::info!(t = d.t, topology_changed = o.topology_changed, buses = o.graph.buses().len());
                graph = o.graph;
            }
            Ok(_) => graph = full_ntp(&state.grid),
            Err(e) => {
                tracing::warn!(t = d.t, error = %e, "delta rejected");
                failed += 1;
            }
        }
    }
    for p in write_graph(&graph, a.format, out)? {
        println!("{}", p.display());
    }
    println!(
        "{} buses, {} branches, {} islands",
        graph.buses().len(),
        graph.branches().len(),
        graph.islands().island_count()
    );
    Ok(Outcome { snapshots: deltas.len() + 1, failed_snapshots: failed })
}

/// Runs the pipeline over the base snapshot and every delta, writing one
/// stage document per snapshot plus the timing tables.
fn staged(
    input: &Input,
    opts: PipelineOptions,
    out: &Path,
    file: &str,
    doc: impl Fn(&SnapshotReport) -> Option<serde_json::Result<serde_json::Value>>,
) -> Result<Outcome> {
    let (base, deltas) = load_input(input)?;
    let mut sink = ReportSink::open(out)?;
    let mut docs = fs::OpenOptions::new().create(true).append(true).open(out.join(file))?;
    let mut pipeline = Pipeline::new(base, opts);
    let mut outcome = Outcome::default();
    let first = pipeline.initialize();
    for report in std::iter::once(first).chain(deltas.into_iter().map(|d| pipeline.process(d))) {
        outcome.snapshots += 1;
        outcome.failed_snapshots += !report.failures.is_empty() as usize;
        for f in &report.failures {
            eprintln!("t={}: {:?} failed: {}", report.t, f.stage, f.message);
        }
        if let Some(v) = doc(&report) {
            let mut v = v?;
            if let Some(obj) = v.as_object_mut() {
                obj.insert("t".into(), report.t.into());
            }
            writeln!(docs, "{v}")?;
            docs.flush()?;
        }
        sink.write(&report)?;
    }
    if let Some(state) = pipeline
        .latest()
        .and_then(|a| if opts.stages.pf { a.pf.as_ref().map(|r| r.state.clone()) } else { a.se.as_ref().map(|r| r.state.clone()) })
    {
        write_state_csv(File::create(out.join("state.csv"))?, &state)?;
    }
    sink.finish()?;
    Ok(outcome)
}

fn write_ca(report: &ContingencyReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("ca.json"), serde_json::to_string_pretty(report)?)?;
    let mut w = csv::Writer::from_path(out.join("ca_cases.csv"))?;
    w.write_record([
        "id",
        "outage",
        "screening",
        "converged",
        "p_iterations",
        "q_iterations",
        "linear_iterations",
        "final_mismatch",
        "violations",
        "symbolic_runs",
        "seconds",
        "error",
    ])?;
    let screening = |c: &ems_core::contingency::CaseResult| serde_json::to_value(c.screening).map(|v| v.as_str().unwrap_or("").to_string());
    for c in &report.cases {
        let outage = match &c.outage {
            ems_core::contingency::Outage::Branch(b) => format!("branch {}", b.0),
            ems_core::contingency::Outage::Generator(g) => format!("generator {g}"),
        };
        w.write_record([
            c.id.to_string(),
            outage,
            screening(c)?,
            c.converged.map_or(String::new(), |b| b.to_string()),
            c.p_iterations.to_string(),
            c.q_iterations.to_string(),
            c.linear_iterations.to_string(),
            c.final_mismatch.to_string(),
            c.violations.len().to_string(),
            c.symbolic_runs.to_string(),
            c.seconds.to_string(),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    let violations: usize = report.cases.iter().map(|c| c.violations.len()).sum();
    w.write_record([
        "total".to_string(),
        format!("{} enumerated", report.cases_enumerated),
        format!("{} screened", report.cases_screened),
        format!("{} run", report.cases_run),
        String::new(),
        String::new(),
        String::new(),
        format!("{} alerts", report.alerts),
        violations.to_string(),
        report.symbolic_runs.to_string(),
        report.total_seconds.to_string(),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}

fn ca(a: &CaArgs, out: &Path) -> Result<Outcome> {
    let (mut state, deltas) = load_input(&a.input)?;
    for d in &deltas {
        state.apply(d).with_context(|| format!("delta at t={}", d.t))?;
    }
    let fdpf = a.pf.options();
    let base = BaseCase::solve(full_ntp(&state.grid), &fdpf)?;
    let report = run_all(&base, &a.ca.options(fdpf))?;
    write_ca(&report, out)?;
    println!(
        "{} cases: {} run, {} screened, {} alerts, {} with violations; symbolic analyses {}; {:.3} s",
        report.cases_enumerated,
        report.cases_run,
        report.cases_screened,
        report.alerts,
        report.cases.iter().filter(|c| !c.violations.is_empty()).count(),
        report.symbolic_runs,
        report.total_seconds
    );
    Ok(Outcome { snapshots: 1, failed_snapshots: (report.alerts > 0) as usize })
}

fn run(a: &RunArgs, out: &Path) -> Result<Outcome> {
    let mut base = load_grid(&a.grid)?;
    let opts = PipelineOptions {
        stages: Stages { se: !a.no_se, pf: !a.no_pf, ca: a.ca },
        warm: !a.se.cold,
        reuse_pf: !a.ca_flags.no_reuse,
        se: a.se.options(),
        pf: a.pf.options(),
        ca: a.ca_flags.options(a.pf.options()),
    };
    let mut sink = ReportSink::open(out)?;
    let mut outcome = Outcome::default();
    let mut handle = |pipeline: &mut Pipeline, sink: &mut ReportSink, d: SnapshotDelta| -> Result<()> {
        let report = pipeline.process(d);
        outcome.snapshots += 1;
        if !report.failures.is_empty() {
            outcome.failed_snapshots += 1;
            for f in &report.failures {
                eprintln!("t={}: {:?} failed: {}", report.t, f.stage, f.message);
            }
        }
        sink.write(&report)
    };
    match (&a.deltas, a.connect) {
        (Some(path), _) => {
            let deltas = load_deltas(path)?;
            if let Some(first) = deltas.first() {
                base.t = base.t.min(first.t);
            }
            let mut pipeline = Pipeline::new(base, opts);
            report_initial(&pipeline.initialize());
            for d in deltas {
                handle(&mut pipeline, &mut sink, d)?;
            }
        }
        (None, Some(addr)) => {
            base.t = i64::MIN;
            let mut pipeline = Pipeline::new(base, opts);
            report_initial(&pipeline.initialize());
            let mut error = None;
            ReplayClient::new(addr).receive_all_with(a.reconnects, |d| {
                if error.is_none() {
                    if let Err(e) = handle(&mut pipeline, &mut sink, d.clone()) {
                        error = Some(e);
                    }
                }
            })?;
            if let Some(e) = error {
                return Err(e);
            }
        }
        (None, None) => bail!("either --deltas or --connect is required"),
    }
    sink.finish()?;
    eprintln!(
        "{} snapshots, {} with stage failures; reports in {}",
        outcome.snapshots,
        outcome.failed_snapshots,
        out.join(REPORTS_FILE).display()
    );
    Ok(outcome)
}

fn report_initial(r: &SnapshotReport) {
    for f in &r.failures {
        eprintln!("initial snapshot: {:?} failed: {}", f.stage, f.message);
    }
    tracing::info!(latency = r.latency_seconds, "initial snapshot analysed");
}

fn export(a: &ExportArgs) -> Result<Outcome> {
    let grid = case_grid(&a.case)?;
    let meters = full_measurement_set(&grid);
    let opts = ScenarioOptions {
        snapshots: if a.deltas.is_some() { a.snapshots } else { 0 },
        seed: a.seed,
        noise: a.noise,
        load_drift: a.load_drift,
        switch_every: a.switch_every,
        ..Default::default()
    };
    let scenario = build_scenario(grid, meters, &opts)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, serialize_grid(&scenario.base.grid, &scenario.base.measurements))
        .with_context(|| format!("cannot write {}", a.out.display()))?;
    if let Some(path) = &a.deltas {
        fs::write(path, serialize_delta_stream(&scenario.deltas))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(Outcome::default())
}

use std::path::Path;
use std::process::{Command, Output};

use ems_cli::report::{read_reports, PF_TIMING_FILE, REPORTS_FILE, SE_TIMING_FILE};

fn ems(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ems"))
        .current_dir(dir)
        .env("EMS_OUT_DIR", dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn export(dir: &Path, case: &str, snapshots: usize) {
    let n = snapshots.to_string();
    let out = ems(dir, &["export-case", case, "--out", "g.gride", "--deltas", "d.deltas", "--snapshots", &n]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_one_report_per_delta() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), "ieee14", 6);
    let out = ems(dir.path(), &["run", "--grid", "g.gride", "--deltas", "d.deltas", "--ca"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = read_reports(&dir.path().join("out").join(REPORTS_FILE)).unwrap();
    assert_eq!(reports.len(), 6);
    assert!(reports.iter().all(|r| r.se.is_some() && r.pf.is_some() && r.ca.is_some()));
    let se = std::fs::read_to_string(dir.path().join("out").join(SE_TIMING_FILE)).unwrap();
    assert!(se.starts_with("t,Total,Gain Formulation,Gain LU,Iterations,RHS Update,F/B Substitution,State Update\n"));
    assert_eq!(se.lines().count(), 7);
}

#[test]
fn empty_stream_leaves_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), "synthetic:5:2", 0);
    std::fs::write(dir.path().join("empty.deltas"), "").unwrap();
    let out = ems(dir.path(), &["run", "--grid", "g.gride", "--deltas", "empty.deltas"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let pf = std::fs::read_to_string(dir.path().join("out").join(PF_TIMING_FILE)).unwrap();
    assert_eq!(pf, "t,Initialization,Symbolic Analysis,Numerical Factorization,Solve,Total\n");
    assert!(read_reports(&dir.path().join("out").join(REPORTS_FILE)).unwrap().is_empty());
}

#[test]
fn stage_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), "ieee14", 1);
    // an unknown meter parses but is rejected when applied
    let text = std::fs::read_to_string(dir.path().join("d.deltas")).unwrap();
    std::fs::write(dir.path().join("bad.deltas"), format!("{text}999999 MEAS NO.SUCH.METER 1.0\n")).unwrap();
    let out = ems(dir.path(), &["run", "--grid", "g.gride", "--deltas", "bad.deltas"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fatal_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.gride"), "<Substation>\n@ id name\n# S1\n").unwrap();
    let out = ems(dir.path(), &["se", "--grid", "broken.gride"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    let out = ems(dir.path(), &["pf", "--grid", "missing.gride"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ntp_and_ca_commands_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), "ieee30", 3);
    let out = ems(dir.path(), &["ntp", "--grid", "g.gride", "--deltas", "d.deltas", "--format", "csv"]);
    assert!(out.status.success());
    let buses = std::fs::read_to_string(dir.path().join("out/buses.csv")).unwrap();
    assert!(buses.lines().count() > 30);
    let out = ems(dir.path(), &["ca", "--grid", "g.gride", "--scheme", "pcg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cases = std::fs::read_to_string(dir.path().join("out/ca_cases.csv")).unwrap();
    assert!(cases.lines().last().unwrap().starts_with("total,"));
}

#[test]
fn replay_feeds_run_over_loopback() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), "ieee14", 4);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut server = Command::new(env!("CARGO_BIN_EXE_ems"))
        .current_dir(dir.path())
        .args(["replay", "--deltas", "d.deltas", "--bind", &addr])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut out = None;
    for _ in 0..50 {
        std::thread::sleep(std::time::Duration::from_millis(100));
        let o = ems(dir.path(), &["run", "--grid", "g.gride", "--connect", &addr, "--reconnects", "0"]);
        if o.status.success() {
            out = Some(o);
            break;
        }
    }
    server.wait().unwrap();
    assert!(out.is_some(), "run never connected");
    assert_eq!(read_reports(&dir.path().join("out").join(REPORTS_FILE)).unwrap().len(), 4);
}

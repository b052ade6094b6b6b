//! TCP replay of a delta stream.
//!
//! Session protocol, all lines `\n`-terminated:
//!
//! 1. the client sends `START`, or `AFTER <t>` to resume after the last
//!    timestamp group it fully received;
//! 2. the server sends every remaining group as its record lines followed by
//!    one blank line, flushing after each group;
//! 3. the server ends the session with `# eos` and closes.
//!
//! A client only commits a group when its terminating blank line arrives, so a
//! connection lost mid-group leaves no partial group behind; reconnecting with
//! `AFTER` re-sends that group whole.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::Duration;

use super::delta::{format_record, parse_record, records_of, DeltaGrouper};
use super::CimeError;
use crate::grid_model::{SnapshotDelta, Timestamp};

const END_OF_STREAM: &str = "# eos";

/// Drop a session's connection after `after_lines` record lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    pub session: usize,
    pub after_lines: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    /// Timestamp groups per second; `None` sends as fast as possible.
    pub rate: Option<f64>,
    /// Number of client sessions to serve before returning.
    pub sessions: usize,
    pub fault: Option<FaultPlan>,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { rate: None, sessions: 1, fault: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub sessions: usize,
    pub groups_sent: usize,
    pub bytes_sent: usize,
    pub faults_injected: usize,
}

/// The bytes a complete session carries for `deltas`, excluding the
/// end-of-stream marker.
pub fn wire_bytes(deltas: &[SnapshotDelta]) -> String {
    let mut out = String::new();
    for d in deltas {
        for r in records_of(d) {
            out.push_str(&format_record(&r));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub struct ReplayServer {
    listener: TcpListener,
}

impl ReplayServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, CimeError> {
        Ok(Self { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, CimeError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves `config.sessions` consecutive client sessions. A client that
    /// disconnects ends its session without failing the server.
    pub fn serve(&self, deltas: &[SnapshotDelta], config: &ReplayConfig) -> Result<ReplayStats, CimeError> {
        let mut stats = ReplayStats::default();
        for session in 0..config.sessions {
            let (stream, _) = self.listener.accept()?;
            stats.sessions += 1;
            let fault = config.fault.filter(|f| f.session == session);
            match serve_session(stream, deltas, config.rate, fault, &mut stats) {
                Ok(()) => {}
                Err(CimeError::Io(e)) => tracing::debug!(session, error = %e, "replay client went away"),
                Err(e) => tracing::debug!(session, error = %e, "replay session rejected"),
            }
        }
        Ok(stats)
    }
}

fn serve_session(
    stream: TcpStream,
    deltas: &[SnapshotDelta],
    rate: Option<f64>,
    fault: Option<FaultPlan>,
    stats: &mut ReplayStats,
) -> Result<(), CimeError> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request = String::new();
    reader.read_line(&mut request)?;
    let after: Option<Timestamp> = match request.trim().split_once(' ') {
        None if request.trim() == "START" => None,
        Some(("AFTER", t)) => Some(t.parse().map_err(|_| CimeError::Protocol(format!("bad resume point `{t}`")))?),
        _ => return Err(CimeError::Protocol(format!("unexpected request `{}`", request.trim()))),
    };
    let mut out = std::io::BufWriter::new(stream);
    let mut lines = 0;
    let pause = rate.filter(|r| *r > 0.0 && r.is_finite()).map(|r| Duration::from_secs_f64(1.0 / r));
    for d in deltas.iter().filter(|d| after.is_none_or(|a| d.t > a)) {
        for r in records_of(d) {
            if fault.is_some_and(|f| lines == f.after_lines) {
                out.flush()?;
                out.get_ref().shutdown(std::net::Shutdown::Both)?;
                stats.faults_injected += 1;
                return Ok(());
            }
            let text = format_record(&r);
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            stats.bytes_sent += text.len() + 1;
            lines += 1;
        }
        out.write_all(b"\n")?;
        out.flush()?;
        stats.bytes_sent += 1;
        stats.groups_sent += 1;
        if let Some(p) = pause {
            thread::sleep(p);
        }
    }
    writeln!(out, "{END_OF_STREAM}")?;
    out.flush()?;
    Ok(())
}

/// Groups received in one session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionOutcome {
    pub deltas: Vec<SnapshotDelta>,
    /// Wire text of the committed groups, blank separators included.
    pub raw: String,
    /// Whether the end-of-stream marker arrived.
    pub complete: bool,
}

/// Everything received across sessions, including reconnects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceivedStream {
    pub deltas: Vec<SnapshotDelta>,
    pub raw: String,
    pub reconnects: usize,
}

pub struct ReplayClient {
    addr: SocketAddr,
}

impl ReplayClient {
    pub fn new(addr: SocketAddr) -> Self {
        Self { addr }
    }

    /// Runs one session, committing only whole timestamp groups.
    pub fn fetch_session(&self, after: Option<Timestamp>) -> Result<SessionOutcome, CimeError> {
        self.fetch_session_with(after, |_| {})
    }

    /// Like [`ReplayClient::fetch_session`], handing each group to `on_group`
    /// as soon as it is committed.
    pub fn fetch_session_with(
        &self,
        after: Option<Timestamp>,
        mut on_group: impl FnMut(&SnapshotDelta),
    ) -> Result<SessionOutcome, CimeError> {
        let stream = TcpStream::connect(self.addr)?;
        let mut writer = stream.try_clone()?;
        match after {
            None => writeln!(writer, "START")?,
            Some(t) => writeln!(writer, "AFTER {t}")?,
        }
        writer.flush()?;
        let mut reader = BufReader::new(stream);
        let mut outcome = SessionOutcome::default();
        let mut pending: Vec<String> = Vec::new();
        let mut line_no = 0;
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {}
                Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset => break,
                Err(e) => return Err(e.into()),
            }
            line_no += 1;
            if !line.ends_with('\n') {
                // cut off mid-line
                break;
            }
            let body = line.trim_end_matches('\n');
            if body == END_OF_STREAM {
                outcome.complete = true;
                break;
            }
            if !body.is_empty() {
                pending.push(body.to_string());
                continue;
            }
            let mut grouper = DeltaGrouper::new();
            for text in &pending {
                let record = parse_record(text, line_no)
                    .map_err(|e| CimeError::Syntax(vec![e]))?
                    .ok_or_else(|| CimeError::Protocol(format!("unexpected line `{text}`")))?;
                if grouper.push(record, line_no)?.is_some() {
                    return Err(CimeError::Protocol("group spans several timestamps".into()));
                }
            }
            if let Some(d) = grouper.finish() {
                for text in pending.drain(..) {
                    outcome.raw.push_str(&text);
                    outcome.raw.push('\n');
                }
                outcome.raw.push('\n');
                on_group(&d);
                outcome.deltas.push(d);
            }
        }
        Ok(outcome)
    }

    /// Fetches the whole stream, reconnecting after dropped sessions.
    pub fn receive_all(&self, max_reconnects: usize) -> Result<ReceivedStream, CimeError> {
        self.receive_all_with(max_reconnects, |_| {})
    }

    /// Like [`ReplayClient::receive_all`], handing each group to `on_group`
    /// as it arrives. Groups are never handed over twice across reconnects.
    pub fn receive_all_with(
        &self,
        max_reconnects: usize,
        mut on_group: impl FnMut(&SnapshotDelta),
    ) -> Result<ReceivedStream, CimeError> {
        let mut received = ReceivedStream::default();
        loop {
            let after = received.deltas.last().map(|d| d.t);
            let session = self.fetch_session_with(after, &mut on_group)?;
            received.deltas.extend(session.deltas);
            received.raw.push_str(&session.raw);
            if session.complete {
                return Ok(received);
            }
            if received.reconnects == max_reconnects {
                return Err(CimeError::Protocol(format!("stream incomplete after {max_reconnects} reconnects")));
            }
            received.reconnects += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::SwitchStatus;

    fn sample() -> Vec<SnapshotDelta> {
        let mut a = SnapshotDelta::empty(100);
        a.switches.push(("CB1".into(), SwitchStatus::Open));
        a.measurements.push(("V1".into(), 1.0125));
        let b = SnapshotDelta::empty(200);
        let mut c = SnapshotDelta::empty(300);
        c.injections.push(("LD".into(), 0.5, -0.25));
        c.measurements.push(("P1".into(), 0.1));
        vec![a, b, c]
    }

    #[test]
    fn loopback_round_trip() {
        let server = ReplayServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap();
        let deltas = sample();
        let sent = deltas.clone();
        let handle = thread::spawn(move || server.serve(&sent, &ReplayConfig::default()).unwrap());
        let got = ReplayClient::new(addr).receive_all(0).unwrap();
        let stats = handle.join().unwrap();
        assert_eq!(got.deltas, deltas);
        assert_eq!(got.raw, wire_bytes(&deltas));
        assert_eq!(stats.groups_sent, 3);
    }

    #[test]
    fn dropped_session_never_leaves_partial_group() {
        let server = ReplayServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap();
        let deltas = sample();
        let sent = deltas.clone();
        // line 1 is the first record of the first group: cut after it
        let config = ReplayConfig { rate: None, sessions: 2, fault: Some(FaultPlan { session: 0, after_lines: 1 }) };
        let handle = thread::spawn(move || server.serve(&sent, &config).unwrap());
        let client = ReplayClient::new(addr);
        let first = client.fetch_session(None).unwrap();
        assert!(!first.complete);
        assert!(first.deltas.is_empty());
        let rest = client.fetch_session(first.deltas.last().map(|d| d.t)).unwrap();
        assert!(rest.complete);
        assert_eq!(rest.deltas, deltas);
        assert_eq!(handle.join().unwrap().faults_injected, 1);
    }

    #[test]
    fn bind_failure_is_reported() {
        let server = ReplayServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap();
        assert!(matches!(ReplayServer::bind(addr), Err(CimeError::Io(_))));
    }
}

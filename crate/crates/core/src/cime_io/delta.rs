use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{parse_finite, quote, tokenize, CimeError, SyntaxError};
use crate::grid_model::{SnapshotDelta, SwitchStatus, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RecordValue {
    Switch(SwitchStatus),
    Meas(f64),
    Inj(f64, f64),
    /// Marks a snapshot that carries no changes.
    Tick,
}

/// One line of a delta stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub t: Timestamp,
    pub id: String,
    pub value: RecordValue,
}

fn syntax(line: usize, column: usize, expected: &str, found: String) -> SyntaxError {
    SyntaxError { line, column, expected: expected.to_string(), found }
}

/// Parses one line; blank and `#` lines yield `None`.
pub fn parse_record(text: &str, line: usize) -> Result<Option<DeltaRecord>, SyntaxError> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let tokens = tokenize(text, line)?;
    if tokens.len() != 4 {
        let (column, found) = match tokens.get(4) {
            Some(t) => (t.column, format!("`{}`", t.text)),
            None => (text.chars().count() + 1, "end of line".to_string()),
        };
        return Err(syntax(line, column, "`t kind id value`", found));
    }
    let t: Timestamp = tokens[0]
        .text
        .parse()
        .map_err(|_| syntax(line, tokens[0].column, "integer timestamp", format!("`{}`", tokens[0].text)))?;
    let (v, vcol) = (tokens[3].text.as_str(), tokens[3].column);
    let bad_value = |expected: &str| syntax(line, vcol, expected, format!("`{v}`"));
    let value = match tokens[1].text.as_str() {
        "SWITCH" => RecordValue::Switch(match v {
            "open" => SwitchStatus::Open,
            "closed" => SwitchStatus::Closed,
            _ => return Err(bad_value("`open` or `closed`")),
        }),
        "MEAS" => RecordValue::Meas(parse_finite(v).ok_or_else(|| bad_value("finite number"))?),
        "INJ" => {
            let (p, q) = v
                .split_once(',')
                .and_then(|(p, q)| Some((parse_finite(p)?, parse_finite(q)?)))
                .ok_or_else(|| bad_value("`p,q`"))?;
            RecordValue::Inj(p, q)
        }
        "TICK" => RecordValue::Tick,
        other => {
            return Err(syntax(line, tokens[1].column, "one of `SWITCH MEAS INJ TICK`", format!("`{other}`")));
        }
    };
    Ok(Some(DeltaRecord { t, id: tokens[2].text.clone(), value }))
}

pub fn format_record(r: &DeltaRecord) -> String {
    let (kind, value) = match r.value {
        RecordValue::Switch(s) => ("SWITCH", if s.is_closed() { "closed".to_string() } else { "open".to_string() }),
        RecordValue::Meas(v) => ("MEAS", format!("{v}")),
        RecordValue::Inj(p, q) => ("INJ", format!("{p},{q}")),
        RecordValue::Tick => ("TICK", "-".to_string()),
    };
    format!("{} {kind} {} {value}", r.t, quote(&r.id))
}

/// The records of one delta, switches first; an empty delta is one `TICK`.
pub fn records_of(d: &SnapshotDelta) -> Vec<DeltaRecord> {
    let mut out: Vec<DeltaRecord> = Vec::with_capacity(d.record_count().max(1));
    out.extend(d.switches.iter().map(|(id, s)| DeltaRecord { t: d.t, id: id.clone(), value: RecordValue::Switch(*s) }));
    out.extend(d.measurements.iter().map(|(id, v)| DeltaRecord { t: d.t, id: id.clone(), value: RecordValue::Meas(*v) }));
    out.extend(d.injections.iter().map(|(id, p, q)| DeltaRecord { t: d.t, id: id.clone(), value: RecordValue::Inj(*p, *q) }));
    if out.is_empty() {
        out.push(DeltaRecord { t: d.t, id: "-".to_string(), value: RecordValue::Tick });
    }
    out
}

/// Groups records into deltas by timestamp, enforcing monotone time.
#[derive(Debug, Default)]
pub struct DeltaGrouper {
    current: Option<SnapshotDelta>,
}

impl DeltaGrouper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a record; returns the previous group once a later `t` arrives.
    pub fn push(&mut self, r: DeltaRecord, line: usize) -> Result<Option<SnapshotDelta>, CimeError> {
        let done = match &self.current {
            Some(cur) if r.t < cur.t => return Err(CimeError::NonMonotone { line, t: r.t, previous: cur.t }),
            Some(cur) if r.t == cur.t => None,
            _ => self.current.replace(SnapshotDelta::empty(r.t)),
        };
        let cur = self.current.as_mut().expect("group open");
        match r.value {
            RecordValue::Switch(s) => cur.switches.push((r.id, s)),
            RecordValue::Meas(v) => cur.measurements.push((r.id, v)),
            RecordValue::Inj(p, q) => cur.injections.push((r.id, p, q)),
            RecordValue::Tick => {}
        }
        Ok(done)
    }

    pub fn finish(self) -> Option<SnapshotDelta> {
        self.current
    }

    pub fn timestamp(&self) -> Option<Timestamp> {
        self.current.as_ref().map(|d| d.t)
    }
}

pub fn parse_delta_stream(text: &str) -> Result<Vec<SnapshotDelta>, CimeError> {
    read_delta_stream(text.as_bytes())
}

pub fn read_delta_stream(reader: impl BufRead) -> Result<Vec<SnapshotDelta>, CimeError> {
    let mut grouper = DeltaGrouper::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if let Some(r) = parse_record(&line, line_no).map_err(|e| CimeError::Syntax(vec![e]))? {
            out.extend(grouper.push(r, line_no)?);
        }
    }
    out.extend(grouper.finish());
    Ok(out)
}

/// One record per line. Deltas sharing a timestamp merge when read back.
pub fn serialize_delta_stream(deltas: &[SnapshotDelta]) -> String {
    let mut out = String::new();
    for d in deltas {
        for r in records_of(d) {
            out.push_str(&format_record(&r));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream() {
        assert!(parse_delta_stream("").unwrap().is_empty());
        assert!(parse_delta_stream("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn same_timestamp_groups() {
        let d = parse_delta_stream("10 SWITCH CB1 open\n10 MEAS V1 1.01\n20 INJ LD1 0.5,0.1\n30 TICK - -\n").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d[0].record_count(), 2);
        assert_eq!(d[1].injections, vec![("LD1".to_string(), 0.5, 0.1)]);
        assert!(d[2].is_empty());
    }

    #[test]
    fn decreasing_timestamp_names_offender() {
        match parse_delta_stream("10 TICK - -\n5 MEAS M 1\n") {
            Err(CimeError::NonMonotone { line: 2, t: 5, previous: 10 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_records() {
        for bad in ["x MEAS M 1", "1 FOO M 1", "1 MEAS M", "1 MEAS M nan", "1 SWITCH K half", "1 INJ L 1", "1 MEAS M 1 2"] {
            assert!(matches!(parse_delta_stream(bad), Err(CimeError::Syntax(_))), "{bad}");
        }
    }

    #[test]
    fn serialize_round_trip() {
        let mut a = SnapshotDelta::empty(1);
        a.switches.push(("K 1".into(), SwitchStatus::Closed));
        a.measurements.push(("M".into(), -0.1));
        let b = SnapshotDelta::empty(2);
        let mut c = SnapshotDelta::empty(3);
        c.injections.push(("L".into(), 1e-7, 3.0));
        let deltas = vec![a, b, c];
        assert_eq!(parse_delta_stream(&serialize_delta_stream(&deltas)).unwrap(), deltas);
    }
}

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::CimeError;
use crate::grid_model::StateVector;

/// Writes rows as CSV with a header derived from the row type.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), CimeError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `bus,vm,va` per bus of the state vector.
pub fn write_state_csv<W: Write>(writer: W, state: &StateVector) -> Result<(), CimeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bus", "vm", "va"])?;
    for k in 0..state.len() {
        w.write_record([state.buses[k].to_string(), state.vm[k].to_string(), state.va[k].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one JSON document per line, flushing each.
pub struct JsonlWriter<W: Write> {
    inner: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn write<T: Serialize>(&mut self, item: &T) -> Result<(), CimeError> {
        let mut line = serde_json::to_vec(item)?;
        line.push(b'\n');
        self.inner.write_all(&line)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Reads JSON-lines, skipping blank lines.
pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(reader: R) -> Result<Vec<T>, CimeError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

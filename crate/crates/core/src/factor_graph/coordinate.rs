//! Coordinate text format: a `n nnz` header followed by one `row col value`
//! line per entry, 0-based. Lines starting with `%` are comments.

use std::fmt::Write as _;

use super::{FactorError, Result, SparseSystem};

pub fn write_coordinate(sys: &SparseSystem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", sys.n(), sys.nnz());
    for (r, c, v) in sys.entries() {
        let _ = writeln!(out, "{r} {c} {v}");
    }
    out
}

pub fn read_coordinate(text: &str) -> Result<SparseSystem> {
    let parse_err = |line: usize, message: String| FactorError::Parse { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));

    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let [n, nnz] = head[..] else {
        return Err(parse_err(hline, "header must be `n nnz`".into()));
    };
    let n: usize = n.parse().map_err(|e| parse_err(hline, format!("dimension: {e}")))?;
    let nnz: usize = nnz.parse().map_err(|e| parse_err(hline, format!("nnz: {e}")))?;

    let mut entries = Vec::with_capacity(nnz.min(1 << 20));
    for (line, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        let [r, c, v] = tok[..] else {
            return Err(parse_err(line, "expected `row col value`".into()));
        };
        let r: usize = r.parse().map_err(|e| parse_err(line, format!("row: {e}")))?;
        let c: usize = c.parse().map_err(|e| parse_err(line, format!("col: {e}")))?;
        let v: f64 = v.parse().map_err(|e| parse_err(line, format!("value: {e}")))?;
        entries.push((r, c, v));
    }
    if entries.len() != nnz {
        return Err(parse_err(hline, format!("header declares {nnz} entries, found {}", entries.len())));
    }
    SparseSystem::try_from_entries(n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let a = SparseSystem::from_triplets(3, [(0, 0, 0.1), (2, 1, -1.0 / 3.0), (1, 2, 1e-300)]).unwrap();
        assert_eq!(read_coordinate(&write_coordinate(&a)).unwrap(), a);
    }

    #[test]
    fn malformed_lines_report_position() {
        assert!(matches!(read_coordinate("2 1\n0 x 1.0\n"), Err(FactorError::Parse { line: 2, .. })));
        assert!(matches!(read_coordinate("2 2\n0 0 1.0\n"), Err(FactorError::Parse { line: 1, .. })));
    }
}

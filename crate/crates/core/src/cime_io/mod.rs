//! Text formats: the `.gride` grid description, `.deltas` snapshot-delta
//! streams, a TCP replay of delta streams, and CSV/JSON-lines emitters.
//!
//! # Grid file grammar
//!
//! ```text
//! file      := header { blank | comment | table }
//! header    := "<!" { key "=" value } "!>"          keys: version mva_base vmin vmax
//! table     := "<" Name ">" columns { row | blank | comment } "</" Name ">"
//! columns   := "@" column-name { column-name }      must list the table's columns in order
//! row       := "#" token { token }                  one token per column
//! comment   := "//" ...
//! token     := bare | '"' { char | '\"' | '\\' } '"'
//! ```
//!
//! Tables and their columns (all values per-unit):
//!
//! | table           | columns |
//! |-----------------|---------|
//! | `Substation`    | `id name` |
//! | `BusbarSection` | `id substation node` |
//! | `Breaker`       | `id substation node1 node2 status` (`open`/`closed`) |
//! | `Disconnector`  | `id substation node1 node2 status` |
//! | `Load`          | `id substation node p q` |
//! | `Unit`          | `id substation node p q v_set slack` (`slack` is 0/1) |
//! | `Compensator`   | `id substation node g b` |
//! | `ACLine`        | `id from_substation from_node to_substation to_node r x b rate status` (`in`/`out`) |
//! | `Transformer`   | `id from_substation from_node to_substation to_node r x b tap rate status` |
//! | `Measurement`   | `id kind location end sigma value` |
//!
//! Measurement `kind` is `V`, `P`, `Q` (location = any device, `end` = `-`)
//! or `PF`, `QF` (location = line/transformer id, `end` = `from`/`to`).
//! `sigma` and `value` accept `-` for "default" and "not yet received".
//! Connectivity nodes are named per substation and created on first use.
//! Lines and transformers create terminal devices `<id>.from` and `<id>.to`.
//!
//! Tables may appear in any order and more than once; records are applied in
//! the table order above. Every syntax error in the file is reported; semantic
//! checking stops at the first error.
//!
//! # Delta stream grammar
//!
//! One record per line, `t kind id value`, with `t` in integer milliseconds:
//!
//! * `SWITCH <device> open|closed`
//! * `MEAS <measurement> <value>`
//! * `INJ <load-or-unit> <p>,<q>`
//! * `TICK - -` (a snapshot with no changes)
//!
//! Consecutive records with the same `t` form one delta; `t` never decreases.
//! Blank lines and lines starting with `#` are ignored.
//!
//! The format is a simplified reconstruction in the spirit of CIM/E (tagged
//! tables of whitespace-separated records), not a conforming implementation.

mod delta;
mod emit;
mod grid;
mod replay;

use std::borrow::Cow;
use std::fmt;

use thiserror::Error;

use crate::grid_model::{GridModelError, Timestamp};

pub use delta::{
    format_record, parse_delta_stream, parse_record, read_delta_stream, records_of, serialize_delta_stream,
    DeltaGrouper, DeltaRecord, RecordValue,
};
pub use emit::{read_jsonl, write_csv, write_state_csv, JsonlWriter};
pub use grid::{parse_grid, serialize_grid, GridFile, FORMAT_VERSION};
pub use replay::{
    wire_bytes, FaultPlan, ReplayClient, ReplayConfig, ReplayServer, ReplayStats, ReceivedStream, SessionOutcome,
};

/// A located syntax problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    /// 1-based character column.
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: expected {}, found {}", self.line, self.column, self.expected, self.found)
    }
}

fn summarize(errors: &[SyntaxError]) -> String {
    match errors {
        [] => "syntax error".to_string(),
        [one] => one.to_string(),
        [first, rest @ ..] => format!("{first} (and {} more syntax errors)", rest.len()),
    }
}

#[derive(Debug, Error)]
pub enum CimeError {
    #[error("{}", summarize(.0))]
    Syntax(Vec<SyntaxError>),
    #[error("line {line}: duplicate {class} id `{id}` (first defined on line {first})")]
    DuplicateId { class: &'static str, id: String, first: usize, line: usize },
    #[error("line {line}: {source}")]
    Semantic { line: usize, source: GridModelError },
    #[error("line {line}: timestamp {t} precedes {previous}")]
    NonMonotone { line: usize, t: Timestamp, previous: Timestamp },
    #[error("replay protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CimeError {
    /// Source line of the diagnostic, when it has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            CimeError::Syntax(e) => e.first().map(|e| e.line),
            CimeError::DuplicateId { line, .. } | CimeError::Semantic { line, .. } | CimeError::NonMonotone { line, .. } => {
                Some(*line)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub text: String,
    pub column: usize,
}

/// Splits a line into whitespace-separated tokens, honouring double quotes.
pub(crate) fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().enumerate().peekable();
    while let Some(&(col, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut text = String::new();
        if c == '"' {
            chars.next();
            loop {
                match chars.next() {
                    Some((_, '"')) => break,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, e @ ('"' | '\\'))) => text.push(e),
                        Some((ecol, other)) => {
                            return Err(SyntaxError {
                                line: line_no,
                                column: ecol + 1,
                                expected: "escape `\\\"` or `\\\\`".into(),
                                found: format!("`\\{other}`"),
                            })
                        }
                        None => {
                            return Err(SyntaxError {
                                line: line_no,
                                column: col + 1,
                                expected: "closing quote".into(),
                                found: "end of line".into(),
                            })
                        }
                    },
                    Some((_, ch)) => text.push(ch),
                    None => {
                        return Err(SyntaxError {
                            line: line_no,
                            column: col + 1,
                            expected: "closing quote".into(),
                            found: "end of line".into(),
                        })
                    }
                }
            }
            if let Some(&(ncol, n)) = chars.peek() {
                if !n.is_whitespace() {
                    return Err(SyntaxError {
                        line: line_no,
                        column: ncol + 1,
                        expected: "whitespace after quoted token".into(),
                        found: format!("`{n}`"),
                    });
                }
            }
        } else {
            while let Some(&(_, ch)) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                text.push(ch);
                chars.next();
            }
        }
        tokens.push(Token { text, column: col + 1 });
    }
    Ok(tokens)
}

/// Quotes a token when it would not survive [`tokenize`] bare.
pub(crate) fn quote(s: &str) -> Cow<'_, str> {
    let special_start = s.starts_with(['#', '@', '<', '/', '"']);
    if !s.is_empty() && !special_start && !s.chars().any(|c| c.is_whitespace() || c == '"' || c == '\\') {
        return Cow::Borrowed(s);
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    Cow::Owned(out)
}

pub(crate) fn parse_finite(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoted_tokens_round_trip() {
        for s in ["plain", "two words", "", "say \"hi\"", "back\\slash", "#hash", "tab\tsep"] {
            let line = format!("a {} b", quote(s));
            let toks = tokenize(&line, 1).unwrap();
            assert_eq!(toks.len(), 3, "{line}");
            assert_eq!(toks[1].text, s);
        }
    }

    #[test]
    fn columns_are_one_based_characters() {
        let toks = tokenize("  ab  \"c d\"", 1).unwrap();
        assert_eq!(toks[0].column, 3);
        assert_eq!(toks[1].column, 7);
    }

    #[test]
    fn unterminated_quote_is_located() {
        let e = tokenize("x \"abc", 4).unwrap_err();
        assert_eq!((e.line, e.column), (4, 3));
    }
}

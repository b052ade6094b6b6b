use std::collections::HashMap;
use std::fmt::Write as _;

use super::{parse_finite, quote, tokenize, CimeError, SyntaxError, Token};
use crate::grid_model::{
    BranchEnd, DeviceKind, DeviceParams, GridModelError, LinkKind, LinkParams, MeasurementDef, MeasurementKind,
    MeasurementSet, MeasurementSite, NodeBreakerBuilder, NodeBreakerGraph, SwitchStatus, VoltageBand,
};

pub const FORMAT_VERSION: &str = "1.0";

/// A parsed grid file: the node-breaker model and its meters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub grid: NodeBreakerGraph,
    pub measurements: MeasurementSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Col {
    Text,
    Num,
    OptNum,
    Switch,
    Flag,
    InOut,
    Kind,
    End,
}

impl Col {
    fn expected(self) -> &'static str {
        match self {
            Col::Text => "identifier",
            Col::Num => "finite number",
            Col::OptNum => "finite number or `-`",
            Col::Switch => "`open` or `closed`",
            Col::Flag => "`0` or `1`",
            Col::InOut => "`in` or `out`",
            Col::Kind => "one of `V P Q PF QF`",
            Col::End => "`from`, `to` or `-`",
        }
    }

    fn accepts(self, s: &str) -> bool {
        match self {
            Col::Text => true,
            Col::Num => parse_finite(s).is_some(),
            Col::OptNum => s == "-" || parse_finite(s).is_some(),
            Col::Switch => matches!(s, "open" | "closed"),
            Col::Flag => matches!(s, "0" | "1"),
            Col::InOut => matches!(s, "in" | "out"),
            Col::Kind => matches!(s, "V" | "P" | "Q" | "PF" | "QF"),
            Col::End => matches!(s, "from" | "to" | "-"),
        }
    }
}

use Col::*;

type Schema = (&'static str, &'static [(&'static str, Col)]);

const SWITCH_COLS: &[(&str, Col)] = &[("id", Text), ("substation", Text), ("node1", Text), ("node2", Text), ("status", Switch)];

/// Tables in application order.
const TABLES: [Schema; 10] = [
    ("Substation", &[("id", Text), ("name", Text)]),
    ("BusbarSection", &[("id", Text), ("substation", Text), ("node", Text)]),
    ("Breaker", SWITCH_COLS),
    ("Disconnector", SWITCH_COLS),
    ("Load", &[("id", Text), ("substation", Text), ("node", Text), ("p", Num), ("q", Num)]),
    (
        "Unit",
        &[("id", Text), ("substation", Text), ("node", Text), ("p", Num), ("q", Num), ("v_set", Num), ("slack", Flag)],
    ),
    ("Compensator", &[("id", Text), ("substation", Text), ("node", Text), ("g", Num), ("b", Num)]),
    (
        "ACLine",
        &[
            ("id", Text),
            ("from_substation", Text),
            ("from_node", Text),
            ("to_substation", Text),
            ("to_node", Text),
            ("r", Num),
            ("x", Num),
            ("b", Num),
            ("rate", Num),
            ("status", InOut),
        ],
    ),
    (
        "Transformer",
        &[
            ("id", Text),
            ("from_substation", Text),
            ("from_node", Text),
            ("to_substation", Text),
            ("to_node", Text),
            ("r", Num),
            ("x", Num),
            ("b", Num),
            ("tap", Num),
            ("rate", Num),
            ("status", InOut),
        ],
    ),
    (
        "Measurement",
        &[("id", Text), ("kind", Kind), ("location", Text), ("end", End), ("sigma", OptNum), ("value", OptNum)],
    ),
];

struct Row {
    line: usize,
    fields: Vec<String>,
}

struct Header {
    mva_base: f64,
    band: VoltageBand,
}

fn err(line: usize, column: usize, expected: impl Into<String>, found: impl Into<String>) -> SyntaxError {
    SyntaxError { line, column, expected: expected.into(), found: found.into() }
}

fn found(tok: Option<&Token>) -> String {
    tok.map_or_else(|| "end of line".to_string(), |t| format!("`{}`", t.text))
}

fn parse_header(tokens: &[Token], line: usize) -> Result<Header, SyntaxError> {
    if tokens.first().map(|t| t.text.as_str()) != Some("<!") {
        return Err(err(line, tokens.first().map_or(1, |t| t.column), "header `<!`", found(tokens.first())));
    }
    let last = tokens.last().expect("non-empty");
    if tokens.len() < 2 || last.text != "!>" {
        return Err(err(line, last.column, "header terminator `!>`", found(Some(last))));
    }
    let mut header = Header { mva_base: f64::NAN, band: VoltageBand::default() };
    for tok in &tokens[1..tokens.len() - 1] {
        let Some((key, value)) = tok.text.split_once('=') else {
            return Err(err(line, tok.column, "`key=value`", found(Some(tok))));
        };
        let num = || parse_finite(value).ok_or_else(|| err(line, tok.column + key.len() + 1, "finite number", format!("`{value}`")));
        match key {
            "version" if value == FORMAT_VERSION => {}
            "version" => return Err(err(line, tok.column + 8, format!("version {FORMAT_VERSION}"), format!("`{value}`"))),
            "mva_base" => {
                header.mva_base = num()?;
                if header.mva_base <= 0.0 {
                    return Err(err(line, tok.column + 9, "positive MVA base", format!("`{value}`")));
                }
            }
            "vmin" => header.band.min = num()?,
            "vmax" => header.band.max = num()?,
            _ => return Err(err(line, tok.column, "one of `version mva_base vmin vmax`", format!("`{key}`"))),
        }
    }
    if header.mva_base.is_nan() {
        return Err(err(line, last.column, "`mva_base=` entry", "`!>`"));
    }
    if header.band.min >= header.band.max {
        return Err(err(line, 1, "vmin < vmax", format!("{} >= {}", header.band.min, header.band.max)));
    }
    Ok(header)
}

/// Syntax pass: header, table framing, column lists and field types.
fn scan(text: &str) -> Result<(Header, Vec<Vec<Row>>), CimeError> {
    let mut errors: Vec<SyntaxError> = Vec::new();
    let mut header: Option<Header> = None;
    let mut rows: Vec<Vec<Row>> = (0..TABLES.len()).map(|_| Vec::new()).collect();
    // open table: (index into TABLES or None when unknown, columns seen, opening line)
    let mut open: Option<(Option<usize>, bool, usize)> = None;
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        let tokens = match tokenize(raw, line) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let first = &tokens[0];
        if header.is_none() {
            match parse_header(&tokens, line) {
                Ok(h) => header = Some(h),
                Err(e) => {
                    errors.push(e);
                    return Err(CimeError::Syntax(errors));
                }
            }
            continue;
        }
        match open {
            None => {
                let name = first.text.strip_prefix('<').and_then(|s| s.strip_suffix('>'));
                match name {
                    Some(name) if !name.starts_with('/') && tokens.len() == 1 => {
                        let idx = TABLES.iter().position(|(n, _)| *n == name);
                        if idx.is_none() {
                            errors.push(err(line, first.column, "known table name", format!("`{name}`")));
                        }
                        open = Some((idx, false, line));
                    }
                    _ => errors.push(err(line, first.column, "`<Table>`", found(Some(first)))),
                }
            }
            Some((idx, columns_seen, _)) => {
                if let Some(name) = first.text.strip_prefix("</").and_then(|s| s.strip_suffix('>')) {
                    if let Some(idx) = idx {
                        if name != TABLES[idx].0 {
                            errors.push(err(line, first.column, format!("`</{}>`", TABLES[idx].0), found(Some(first))));
                        }
                    }
                    if tokens.len() > 1 {
                        errors.push(err(line, tokens[1].column, "end of line", found(tokens.get(1))));
                    }
                    open = None;
                    continue;
                }
                let Some(idx) = idx else { continue };
                let schema = TABLES[idx].1;
                match first.text.as_str() {
                    "@" => {
                        let names: Vec<&str> = tokens[1..].iter().map(|t| t.text.as_str()).collect();
                        let expected: Vec<&str> = schema.iter().map(|(n, _)| *n).collect();
                        if names != expected {
                            let k = names.iter().zip(&expected).take_while(|(a, b)| a == b).count();
                            errors.push(err(
                                line,
                                tokens.get(k + 1).map_or(raw.chars().count() + 1, |t| t.column),
                                format!("columns `{}`", expected.join(" ")),
                                found(tokens.get(k + 1)),
                            ));
                        }
                        open = Some((Some(idx), true, line));
                    }
                    "#" if !columns_seen => {
                        errors.push(err(line, first.column, "`@` column list", "`#`"));
                    }
                    "#" => {
                        let fields = &tokens[1..];
                        let mut ok = true;
                        for (k, (name, col)) in schema.iter().enumerate() {
                            match fields.get(k) {
                                Some(tok) if col.accepts(&tok.text) => {}
                                Some(tok) => {
                                    errors.push(err(line, tok.column, format!("{name}: {}", col.expected()), found(Some(tok))));
                                    ok = false;
                                }
                                None => {
                                    errors.push(err(line, raw.chars().count() + 1, format!("{name}: {}", col.expected()), "end of line"));
                                    ok = false;
                                    break;
                                }
                            }
                        }
                        if let Some(extra) = fields.get(schema.len()) {
                            errors.push(err(line, extra.column, "end of line", found(Some(extra))));
                            ok = false;
                        }
                        if ok {
                            rows[idx].push(Row { line, fields: fields.iter().map(|t| t.text.clone()).collect() });
                        }
                    }
                    _ => errors.push(err(line, first.column, "`#` row, `@` columns or table close", found(Some(first)))),
                }
            }
        }
    }
    if let Some((idx, _, opened)) = open {
        let name = idx.map_or("table", |i| TABLES[i].0);
        errors.push(err(last_line + 1, 1, format!("`</{name}>` closing the table opened on line {opened}"), "end of file"));
    }
    let Some(header) = header else {
        errors.push(err(last_line.max(1), 1, "header `<! version=1.0 mva_base=... !>`", "end of file"));
        return Err(CimeError::Syntax(errors));
    };
    if !errors.is_empty() {
        return Err(CimeError::Syntax(errors));
    }
    Ok((header, rows))
}

fn num(s: &str) -> f64 {
    parse_finite(s).expect("validated during scan")
}

fn opt_num(s: &str) -> Option<f64> {
    (s != "-").then(|| num(s))
}

fn status(s: &str) -> SwitchStatus {
    if s == "closed" {
        SwitchStatus::Closed
    } else {
        SwitchStatus::Open
    }
}

/// Parses and validates a grid file.
pub fn parse_grid(text: &str) -> Result<GridFile, CimeError> {
    let (header, tables) = scan(text)?;
    let mut b = NodeBreakerGraph::builder(header.mva_base);
    b.v_band(header.band);

    let mut seen: HashMap<(&'static str, String), usize> = HashMap::new();
    let mut check_dup = |class: &'static str, id: &str, line: usize| -> Result<(), CimeError> {
        if let Some(&first) = seen.get(&(class, id.to_string())) {
            return Err(CimeError::DuplicateId { class, id: id.to_string(), first, line });
        }
        seen.insert((class, id.to_string()), line);
        Ok(())
    };
    let semantic = |line: usize| move |source: GridModelError| CimeError::Semantic { line, source };

    let apply = |b: &mut NodeBreakerBuilder, table: usize, f: &[String]| -> Result<(), GridModelError> {
        match TABLES[table].0 {
            "Substation" => b.substation(&f[0], &f[1]).map(drop),
            "BusbarSection" => b.busbar(&f[0], &f[1], &f[2]).map(drop),
            "Breaker" | "Disconnector" => {
                let kind = if TABLES[table].0 == "Breaker" { DeviceKind::CircuitBreaker } else { DeviceKind::Disconnector };
                b.switch(&f[0], kind, &f[1], (&f[2], &f[3]), status(&f[4])).map(drop)
            }
            "Load" => b.load(&f[0], &f[1], &f[2], num(&f[3]), num(&f[4])).map(drop),
            "Unit" => b.generator(&f[0], &f[1], &f[2], num(&f[3]), num(&f[4]), num(&f[5]), f[6] == "1").map(drop),
            "Compensator" => b.shunt(&f[0], &f[1], &f[2], num(&f[3]), num(&f[4])).map(drop),
            "ACLine" | "Transformer" => {
                let line = TABLES[table].0 == "ACLine";
                let (tap, rate, st) = if line { (1.0, num(&f[8]), &f[9]) } else { (num(&f[8]), num(&f[9]), &f[10]) };
                let params = LinkParams { r: num(&f[5]), x: num(&f[6]), b: num(&f[7]), tap, rate, in_service: st == "in" };
                let kind = if line { LinkKind::Line } else { LinkKind::Transformer };
                b.link(&f[0], kind, (&f[1], &f[2]), (&f[3], &f[4]), params).map(drop)
            }
            other => unreachable!("table {other} handled elsewhere"),
        }
    };

    let measurement_table = TABLES.len() - 1;
    for (table, rows) in tables.iter().enumerate().take(measurement_table) {
        let class = match TABLES[table].0 {
            "Substation" => "substation",
            "ACLine" | "Transformer" => "link",
            _ => "device",
        };
        for row in rows {
            check_dup(class, &row.fields[0], row.line)?;
            apply(&mut b, table, &row.fields).map_err(semantic(row.line))?;
        }
    }
    let grid = b.build();

    let mut measurements = MeasurementSet::new();
    for row in &tables[measurement_table] {
        let f = &row.fields;
        check_dup("measurement", &f[0], row.line)?;
        let kind = match f[1].as_str() {
            "V" => MeasurementKind::VMagnitude,
            "P" => MeasurementKind::PInjection,
            "Q" => MeasurementKind::QInjection,
            "PF" => MeasurementKind::PFlow,
            _ => MeasurementKind::QFlow,
        };
        let site = if kind.is_flow() {
            let link = grid.link_index(&f[2]).ok_or_else(|| semantic(row.line)(GridModelError::UnknownLink(f[2].clone())))?;
            let end = match f[3].as_str() {
                "from" => BranchEnd::From,
                "to" => BranchEnd::To,
                _ => return Err(semantic(row.line)(GridModelError::InvalidValue { id: f[0].clone(), field: "end" })),
            };
            MeasurementSite::LinkEnd { link, end }
        } else {
            if f[3] != "-" {
                return Err(semantic(row.line)(GridModelError::InvalidValue { id: f[0].clone(), field: "end" }));
            }
            let d = grid.device_index(&f[2]).ok_or_else(|| semantic(row.line)(GridModelError::UnknownDevice(f[2].clone())))?;
            MeasurementSite::Device(d)
        };
        let def = MeasurementDef {
            id: f[0].clone(),
            kind,
            site,
            sigma: opt_num(&f[4]).unwrap_or(kind.default_sigma()),
            value: opt_num(&f[5]),
        };
        measurements.push(def).map_err(semantic(row.line))?;
    }
    Ok(GridFile { grid, measurements })
}

fn row(out: &mut String, fields: &[&str]) {
    out.push('#');
    for f in fields {
        out.push(' ');
        out.push_str(&quote(f));
    }
    out.push('\n');
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes a grid file that [`parse_grid`] reads back to the same model.
pub fn serialize_grid(grid: &NodeBreakerGraph, measurements: &MeasurementSet) -> String {
    let mut out = String::new();
    let band = grid.v_band;
    let _ = writeln!(
        out,
        "<! version={FORMAT_VERSION} mva_base={} vmin={} vmax={} !>",
        grid.mva_base, band.min, band.max
    );
    let sub = |d: usize| grid.substations()[grid.device(d).substation].id.as_str();
    let node = |d: usize, t: usize| grid.nodes()[grid.device(d).terminals[t]].name.as_str();
    for (name, cols) in TABLES {
        let _ = writeln!(out, "<{name}>");
        let names: Vec<&str> = cols.iter().map(|(n, _)| *n).collect();
        let _ = writeln!(out, "@ {}", names.join(" "));
        match name {
            "Substation" => {
                for s in grid.substations() {
                    row(&mut out, &[&s.id, &s.name]);
                }
            }
            "ACLine" | "Transformer" => {
                let want = if name == "ACLine" { LinkKind::Line } else { LinkKind::Transformer };
                for link in grid.links().iter().filter(|l| l.kind == want) {
                    let p = link.params;
                    let (r, x, b, tap, rate) = (fmt(p.r), fmt(p.x), fmt(p.b), fmt(p.tap), fmt(p.rate));
                    let st = if p.in_service { "in" } else { "out" };
                    let mut fields = vec![&*link.id, sub(link.from), node(link.from, 0), sub(link.to), node(link.to, 0), &r, &x, &b];
                    if want == LinkKind::Transformer {
                        fields.push(&tap);
                    }
                    fields.extend([rate.as_str(), st]);
                    row(&mut out, &fields);
                }
            }
            "Measurement" => {
                for m in measurements.defs() {
                    let kind = match m.kind {
                        MeasurementKind::VMagnitude => "V",
                        MeasurementKind::PInjection => "P",
                        MeasurementKind::QInjection => "Q",
                        MeasurementKind::PFlow => "PF",
                        MeasurementKind::QFlow => "QF",
                    };
                    let (loc, end) = match m.site {
                        MeasurementSite::Device(d) => (grid.device(d).id.as_str(), "-"),
                        MeasurementSite::LinkEnd { link, end } => (
                            grid.link(link).id.as_str(),
                            if end == BranchEnd::From { "from" } else { "to" },
                        ),
                    };
                    let sigma = fmt(m.sigma);
                    let value = m.value.map_or_else(|| "-".to_string(), fmt);
                    row(&mut out, &[&m.id, kind, loc, end, &sigma, &value]);
                }
            }
            _ => {
                for (d, dev) in grid.devices().iter().enumerate() {
                    let values: Vec<String> = match (&dev.params, name) {
                        (DeviceParams::Busbar, "BusbarSection") => vec![],
                        (DeviceParams::Switch { status }, "Breaker" | "Disconnector") => {
                            let want = if name == "Breaker" { DeviceKind::CircuitBreaker } else { DeviceKind::Disconnector };
                            if dev.kind != want {
                                continue;
                            }
                            let st = if status.is_closed() { "closed" } else { "open" };
                            vec![node(d, 1).to_string(), st.to_string()]
                        }
                        (DeviceParams::Load { p, q }, "Load") => vec![fmt(*p), fmt(*q)],
                        (DeviceParams::Generator { p, q, v_set, slack }, "Unit") => {
                            vec![fmt(*p), fmt(*q), fmt(*v_set), if *slack { "1" } else { "0" }.to_string()]
                        }
                        (DeviceParams::Shunt { g, b }, "Compensator") => vec![fmt(*g), fmt(*b)],
                        _ => continue,
                    };
                    let mut fields: Vec<&str> = vec![&dev.id, sub(d), node(d, 0)];
                    fields.extend(values.iter().map(String::as_str));
                    row(&mut out, &fields);
                }
            }
        }
        let _ = writeln!(out, "</{name}>");
    }
    out
}

//! Bundled test networks.
//!
//! The IEEE 14-, 30- and 118-bus cases are stored as a compact column subset
//! of the MATPOWER format (`data/*.txt`, powers in MW/MVAr). They can be
//! materialized directly as bus-branch graphs, or expanded into a node-breaker
//! model with one substation per bus so that they pass through topology
//! processing like any other grid.
//!
//! [`synthetic_grid`] generates double-busbar substations with couplers and
//! feeder bays for topology tests. Its injections are small dyadic rationals,
//! so bus sums are exact in floating point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid_model::{
    Branch, BranchEnd, BranchStatus, Bus, BusBranchGraph, BusType, DeviceKind, GeneratorUnit, GridModelError,
    LinkKind, LinkParams, MeasurementDef, MeasurementKind, MeasurementSet, MeasurementSite, NodeBreakerGraph,
    SwitchStatus, VoltageBand,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] GridModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseBus {
    pub id: u32,
    /// 1 = PQ, 2 = PV, 3 = slack.
    pub kind: u8,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseGen {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub vg: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseBranch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    /// 0 means no transformer.
    pub ratio: f64,
    pub in_service: bool,
}

/// A network in MATPOWER units.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<CaseBus>,
    pub gens: Vec<CaseGen>,
    pub branches: Vec<CaseBranch>,
}

pub fn ieee14() -> CaseData {
    CaseData::parse("ieee14", include_str!("../data/ieee14.txt")).expect("bundled case parses")
}

pub fn ieee30() -> CaseData {
    CaseData::parse("ieee30", include_str!("../data/ieee30.txt")).expect("bundled case parses")
}

pub fn ieee118() -> CaseData {
    CaseData::parse("ieee118", include_str!("../data/ieee118.txt")).expect("bundled case parses")
}

/// Looks a bundled case up by name (`ieee14`, `ieee30`, `ieee118`).
pub fn by_name(name: &str) -> Option<CaseData> {
    match name.to_ascii_lowercase().as_str() {
        "ieee14" | "14" => Some(ieee14()),
        "ieee30" | "30" => Some(ieee30()),
        "ieee118" | "118" => Some(ieee118()),
        _ => None,
    }
}

impl CaseData {
    pub fn parse(name: &str, text: &str) -> Result<Self, CaseError> {
        let mut case = CaseData { name: name.to_string(), base_mva: 100.0, buses: vec![], gens: vec![], branches: vec![] };
        let mut section = "";
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            if l.starts_with('[') {
                section = match l {
                    "[bus]" => "bus",
                    "[gen]" => "gen",
                    "[branch]" => "branch",
                    _ => return Err(CaseError::Parse { line, message: format!("unknown section {l}") }),
                };
                continue;
            }
            let fields: Vec<&str> = l.split_whitespace().collect();
            let num = |k: usize| -> Result<f64, CaseError> {
                fields
                    .get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| CaseError::Parse { line, message: format!("field {} missing or not a number", k + 1) })
            };
            match section {
                "" if fields[0] == "base_mva" => case.base_mva = num(1)?,
                "bus" => case.buses.push(CaseBus {
                    id: num(0)? as u32,
                    kind: num(1)? as u8,
                    pd: num(2)?,
                    qd: num(3)?,
                    gs: num(4)?,
                    bs: num(5)?,
                }),
                "gen" => case.gens.push(CaseGen {
                    bus: num(0)? as u32,
                    pg: num(1)?,
                    qg: num(2)?,
                    vg: num(3)?,
                    in_service: num(4)? > 0.0,
                }),
                "branch" => case.branches.push(CaseBranch {
                    from: num(0)? as u32,
                    to: num(1)? as u32,
                    r: num(2)?,
                    x: num(3)?,
                    b: num(4)?,
                    rate_a: num(5)?,
                    ratio: num(6)?,
                    in_service: num(7)? > 0.0,
                }),
                _ => return Err(CaseError::Parse { line, message: format!("unexpected record `{l}`") }),
            }
        }
        Ok(case)
    }

    fn bus_type(kind: u8) -> BusType {
        match kind {
            3 => BusType::Slack,
            2 => BusType::PV,
            _ => BusType::PQ,
        }
    }

    fn tap(ratio: f64) -> f64 {
        if ratio == 0.0 {
            1.0
        } else {
            ratio
        }
    }

    /// The case as a bus-branch graph. Bus ids are the case's bus numbers;
    /// branch ids number the branch rows from 1.
    pub fn bus_branch(&self) -> Result<BusBranchGraph, CaseError> {
        let base = self.base_mva;
        let mut generators = Vec::new();
        let mut buses: Vec<Bus> = self
            .buses
            .iter()
            .map(|cb| {
                let mut b = Bus::new(cb.id, Self::bus_type(cb.kind));
                b.p_inj = -cb.pd / base;
                b.q_inj = -cb.qd / base;
                b.g_shunt = cb.gs / base;
                b.b_shunt = cb.bs / base;
                b
            })
            .collect();
        for (k, g) in self.gens.iter().enumerate().filter(|(_, g)| g.in_service) {
            let bus = buses
                .iter_mut()
                .find(|b| b.id.0 == g.bus)
                .ok_or_else(|| CaseError::Parse { line: 0, message: format!("generator on unknown bus {}", g.bus) })?;
            bus.p_inj += g.pg / base;
            bus.q_inj += g.qg / base;
            if bus.bus_type != BusType::PQ {
                bus.v = g.vg;
            }
            generators.push(GeneratorUnit {
                name: format!("G{}", k + 1),
                bus: bus.id,
                p: g.pg / base,
                q: g.qg / base,
                v_set: g.vg,
                slack_candidate: bus.bus_type == BusType::Slack,
            });
        }
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(k, cb)| {
                let mut br = Branch::new(k as u32 + 1, cb.from, cb.to, cb.r, cb.x, cb.b);
                br.tap = Self::tap(cb.ratio);
                br.rate = cb.rate_a / base;
                br.status = if cb.in_service { BranchStatus::In } else { BranchStatus::Out };
                br
            })
            .collect();
        Ok(BusBranchGraph::new(base, VoltageBand::default(), buses, branches, generators)?)
    }

    /// Expands the case into a node-breaker model: substation `S<i>` per bus
    /// with busbar `BB<i>`, and each branch end attached through a closed
    /// breaker `CB<k>F` / `CB<k>T`. Topology processing maps bus `i` back to
    /// bus id `i` when the case numbers its buses 1..n.
    pub fn node_breaker(&self) -> Result<NodeBreakerGraph, CaseError> {
        let base = self.base_mva;
        let mut b = NodeBreakerGraph::builder(base);
        for cb in &self.buses {
            b.substation(&format!("S{}", cb.id), &format!("bus {}", cb.id))?;
        }
        for cb in &self.buses {
            b.busbar(&format!("BB{}", cb.id), &format!("S{}", cb.id), "B")?;
        }
        for cb in &self.buses {
            let sub = format!("S{}", cb.id);
            if cb.pd != 0.0 || cb.qd != 0.0 {
                b.load(&format!("LD{}", cb.id), &sub, "B", cb.pd / base, cb.qd / base)?;
            }
            if cb.gs != 0.0 || cb.bs != 0.0 {
                b.shunt(&format!("SH{}", cb.id), &sub, "B", cb.gs / base, cb.bs / base)?;
            }
        }
        for (k, g) in self.gens.iter().enumerate().filter(|(_, g)| g.in_service) {
            let kind = self.buses.iter().find(|cb| cb.id == g.bus).map(|cb| cb.kind).unwrap_or(1);
            b.generator(&format!("G{}", k + 1), &format!("S{}", g.bus), "B", g.pg / base, g.qg / base, g.vg, kind == 3)?;
        }
        for (k, cb) in self.branches.iter().enumerate() {
            let k = k + 1;
            let (fs, ts) = (format!("S{}", cb.from), format!("S{}", cb.to));
            let (fnode, tnode) = (format!("L{k}F"), format!("L{k}T"));
            let kind = if cb.ratio == 0.0 { LinkKind::Line } else { LinkKind::Transformer };
            let params = LinkParams {
                r: cb.r,
                x: cb.x,
                b: cb.b,
                tap: Self::tap(cb.ratio),
                rate: cb.rate_a / base,
                in_service: cb.in_service,
            };
            b.link(&format!("L{k}"), kind, (&fs, &fnode), (&ts, &tnode), params)?;
            b.switch(&format!("CB{k}F"), DeviceKind::CircuitBreaker, &fs, ("B", &fnode), SwitchStatus::Closed)?;
            b.switch(&format!("CB{k}T"), DeviceKind::CircuitBreaker, &ts, ("B", &tnode), SwitchStatus::Closed)?;
        }
        Ok(b.build())
    }
}

/// Full meter placement on a node-breaker model: `V`, `P` and `Q` at every
/// busbar section, and `PF`/`QF` at both ends of every link. Values are unset.
pub fn full_measurement_set(g: &NodeBreakerGraph) -> MeasurementSet {
    let mut set = MeasurementSet::new();
    let mut add = |id: String, kind: MeasurementKind, site: MeasurementSite| {
        set.push(MeasurementDef { id, kind, site, sigma: kind.default_sigma(), value: None })
            .expect("generated ids are unique");
    };
    for (d, dev) in g.devices().iter().enumerate().filter(|(_, d)| d.kind == DeviceKind::BusbarSection) {
        add(format!("V.{}", dev.id), MeasurementKind::VMagnitude, MeasurementSite::Device(d));
        add(format!("P.{}", dev.id), MeasurementKind::PInjection, MeasurementSite::Device(d));
        add(format!("Q.{}", dev.id), MeasurementKind::QInjection, MeasurementSite::Device(d));
    }
    for (l, link) in g.links().iter().enumerate() {
        for (end, tag) in [(BranchEnd::From, "F"), (BranchEnd::To, "T")] {
            add(format!("PF.{}.{tag}", link.id), MeasurementKind::PFlow, MeasurementSite::LinkEnd { link: l, end });
            add(format!("QF.{}.{tag}", link.id), MeasurementKind::QFlow, MeasurementSite::LinkEnd { link: l, end });
        }
    }
    set
}

/// Generated node-breaker grid with `substations` double-busbar substations.
///
/// Substation `S<k>` has sections `S<k>.BB1`/`S<k>.BB2` joined by coupler
/// `S<k>.CPL`. Every load, generator, shunt and link end sits in a bay: a
/// breaker `<dev>.CB` to a bay node, which disconnectors `<dev>.D1` (closed)
/// and `<dev>.D2` (open) tie to the two sections. Links form a ring plus
/// random chords. Substation 0, and every tenth one after it, hosts a slack
/// candidate.
pub fn synthetic_grid(substations: usize, seed: u64) -> NodeBreakerGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NodeBreakerGraph::builder(100.0);
    for k in 0..substations {
        b.substation(&format!("S{k}"), &format!("substation {k}")).unwrap();
    }
    for k in 0..substations {
        let s = format!("S{k}");
        b.busbar(&format!("{s}.BB1"), &s, "BB1").unwrap();
        b.busbar(&format!("{s}.BB2"), &s, "BB2").unwrap();
    }
    let bay = |b: &mut crate::grid_model::NodeBreakerBuilder, s: &str, dev: &str| -> String {
        let (inner, outer) = (format!("{dev}:d"), format!("{dev}:x"));
        b.switch(&format!("{dev}.CB"), DeviceKind::CircuitBreaker, s, (&inner, &outer), SwitchStatus::Closed)
            .unwrap();
        b.switch(&format!("{dev}.D1"), DeviceKind::Disconnector, s, (&outer, "BB1"), SwitchStatus::Closed)
            .unwrap();
        b.switch(&format!("{dev}.D2"), DeviceKind::Disconnector, s, (&outer, "BB2"), SwitchStatus::Open)
            .unwrap();
        inner
    };
    for k in 0..substations {
        let s = format!("S{k}");
        b.switch(&format!("{s}.CPL"), DeviceKind::CircuitBreaker, &s, ("BB1", "BB2"), SwitchStatus::Closed)
            .unwrap();
        let dev = format!("{s}.LD");
        let node = bay(&mut b, &s, &dev);
        let (p, q) = (rng.random_range(1..=32) as f64 / 64.0, rng.random_range(0..=16) as f64 / 128.0);
        b.load(&dev, &s, &node, p, q).unwrap();
        if k % 4 == 0 {
            let dev = format!("{s}.G");
            let node = bay(&mut b, &s, &dev);
            let p = rng.random_range(16..=64) as f64 / 32.0;
            let v = 1.0 + rng.random_range(0..=8) as f64 / 256.0;
            b.generator(&dev, &s, &node, p, 0.0, v, k % 10 == 0).unwrap();
        }
        if rng.random_bool(0.3) {
            let dev = format!("{s}.SH");
            let node = bay(&mut b, &s, &dev);
            b.shunt(&dev, &s, &node, 0.0, rng.random_range(1..=8) as f64 / 64.0).unwrap();
        }
    }
    let mut pairs: Vec<(usize, usize)> = (0..substations).map(|k| (k, (k + 1) % substations)).collect();
    if substations < 3 {
        pairs.truncate(substations.saturating_sub(1));
    }
    for _ in 0..substations / 2 {
        let (f, t) = (rng.random_range(0..substations), rng.random_range(0..substations));
        if f != t {
            pairs.push((f, t));
        }
    }
    for (i, (f, t)) in pairs.into_iter().enumerate() {
        let id = format!("L{i}");
        let (fs, ts) = (format!("S{f}"), format!("S{t}"));
        let fnode = bay(&mut b, &fs, &format!("{id}F"));
        let tnode = bay(&mut b, &ts, &format!("{id}T"));
        let params = LinkParams {
            r: rng.random_range(1..=8) as f64 / 1024.0,
            x: rng.random_range(8..=64) as f64 / 1024.0,
            b: rng.random_range(0..=8) as f64 / 256.0,
            tap: 1.0,
            rate: 2.0,
            in_service: true,
        };
        b.link(&id, LinkKind::Line, (&fs, &fnode), (&ts, &tnode), params).unwrap();
    }
    b.build()
}

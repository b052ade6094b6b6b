//! Network topology processing: node-breaker → bus-branch.
//!
//! Buses are the connected components of connectivity nodes under closed
//! switches. Switches are always internal to a substation, so a bus never
//! spans substations and a substation's partition depends only on its own
//! switch statuses. The incremental path therefore re-partitions only the
//! substations whose switches changed, reuses every other node's bus, and then
//! re-aggregates attributes and re-links branches in one linear pass.
//!
//! Bus ids come from [`BusRegistry`]: every device terminal has a fixed
//! registry number (busbar sections first, in device order), and a bus takes
//! the smallest number among its terminals. That is the smallest busbar
//! section it contains when it has one, and the id is a pure function of the
//! bus's membership, so unchanged buses keep their ids across snapshots and
//! full and incremental processing agree exactly.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSets;
use crate::grid_model::{
    Branch, BranchId, BranchStatus, Bus, BusBranchGraph, BusId, BusType, ChangeSet, DeviceKind, DeviceParams,
    GeneratorUnit, IslandLabeling, NodeBreakerGraph, TopologyProvenance,
};

/// Fixed numbering of device terminals used to name buses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusRegistry {
    /// `terminal_ids[device][terminal]`.
    terminal_ids: Vec<Vec<u32>>,
}

impl BusRegistry {
    pub fn new(g: &NodeBreakerGraph) -> Self {
        let mut terminal_ids: Vec<Vec<u32>> = g.devices().iter().map(|d| vec![0; d.terminals.len()]).collect();
        let mut next = 1u32;
        for (i, d) in g.devices().iter().enumerate() {
            if d.kind == DeviceKind::BusbarSection {
                terminal_ids[i].iter_mut().for_each(|t| {
                    *t = next;
                    next += 1;
                });
            }
        }
        for (i, d) in g.devices().iter().enumerate() {
            if d.kind != DeviceKind::BusbarSection {
                terminal_ids[i].iter_mut().for_each(|t| {
                    *t = next;
                    next += 1;
                });
            }
        }
        Self { terminal_ids }
    }

    pub fn terminal_id(&self, device: usize, terminal: usize) -> u32 {
        self.terminal_ids[device][terminal]
    }
}

/// Result of an incremental update.
#[derive(Debug, Clone)]
pub struct NtpOutput {
    pub graph: BusBranchGraph,
    /// False iff the bus partition and the branch set are unchanged.
    pub topology_changed: bool,
    /// Set when the change-set did not match the graphs and a full rebuild ran.
    pub fell_back_to_full: bool,
    /// Substations whose partition was recomputed.
    pub rebuilt_substations: BTreeSet<usize>,
}

/// Builds the bus-branch model from scratch.
pub fn full_ntp(g: &NodeBreakerGraph) -> BusBranchGraph {
    let registry = BusRegistry::new(g);
    let all: Vec<usize> = (0..g.substations().len()).collect();
    let mut node_bus = vec![BusId(0); g.nodes().len()];
    partition_into(g, &registry, &all, &mut node_bus);
    assemble(g, node_bus)
}

/// Updates `prev` for the switch changes in `changed`.
pub fn incremental_ntp(prev: &BusBranchGraph, g: &NodeBreakerGraph, changed: &ChangeSet) -> NtpOutput {
    let Some(prov) = prev.provenance().filter(|p| consistent(p, g, changed)) else {
        tracing::warn!("change-set inconsistent with topology; running full topology processing");
        let graph = full_ntp(g);
        return NtpOutput {
            topology_changed: topology_differs(prev, &graph),
            graph,
            fell_back_to_full: true,
            rebuilt_substations: (0..g.substations().len()).collect(),
        };
    };
    if changed.topology_substations.is_empty() && changed.injection_substations.is_empty() {
        return NtpOutput {
            graph: prev.clone(),
            topology_changed: false,
            fell_back_to_full: false,
            rebuilt_substations: BTreeSet::new(),
        };
    }
    let registry = BusRegistry::new(g);
    let rebuild: Vec<usize> = changed.topology_substations.iter().copied().collect();
    let mut node_bus = prov.node_bus.clone();
    partition_into(g, &registry, &rebuild, &mut node_bus);
    let graph = assemble(g, node_bus);
    NtpOutput {
        topology_changed: topology_differs(prev, &graph),
        graph,
        fell_back_to_full: false,
        rebuilt_substations: changed.topology_substations.clone(),
    }
}

/// Connected components over in-service branches, with energization.
pub fn detect_islands(g: &BusBranchGraph) -> IslandLabeling {
    let n = g.buses().len();
    let mut sets = DisjointSets::new(n);
    for br in g.branches().iter().filter(|b| b.in_service()) {
        let (f, t) = (g.bus_position(br.from), g.bus_position(br.to));
        if let (Some(f), Some(t)) = (f, t) {
            sets.union(f, t);
        }
    }
    let mut first: BTreeMap<usize, BusId> = BTreeMap::new();
    let mut energized: BTreeMap<usize, bool> = BTreeMap::new();
    for (i, bus) in g.buses().iter().enumerate() {
        let root = sets.find(i);
        first.entry(root).or_insert(bus.id);
        *energized.entry(root).or_insert(false) |= bus.slack_candidate;
    }
    let roots: Vec<usize> = (0..n).map(|i| sets.find(i)).collect();
    IslandLabeling {
        label: roots.iter().map(|r| first[r]).collect(),
        energized: roots.iter().map(|r| energized[r]).collect(),
    }
}

/// The change-set must cover every switch that differs from the snapshot
/// `prev` was built from.
fn consistent(prov: &TopologyProvenance, g: &NodeBreakerGraph, changed: &ChangeSet) -> bool {
    if prov.node_bus.len() != g.nodes().len() || prov.switch_states.len() != g.devices().len() {
        return false;
    }
    g.devices().iter().enumerate().all(|(i, d)| {
        d.switch_status() == prov.switch_states[i] || changed.topology_substations.contains(&d.substation)
    })
}

/// Recomputes the node → bus map inside the given substations.
fn partition_into(g: &NodeBreakerGraph, registry: &BusRegistry, substations: &[usize], node_bus: &mut [BusId]) {
    let parts: Vec<Vec<(usize, BusId)>> = substations
        .par_iter()
        .map(|&s| partition_substation(g, registry, s))
        .collect();
    for part in parts {
        for (node, bus) in part {
            node_bus[node] = bus;
        }
    }
}

fn partition_substation(g: &NodeBreakerGraph, registry: &BusRegistry, s: usize) -> Vec<(usize, BusId)> {
    let nodes = g.nodes_in(s);
    let local: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut sets = DisjointSets::new(nodes.len());
    for &d in g.devices_in(s) {
        let dev = g.device(d);
        if dev.switch_status().is_some_and(|st| st.is_closed()) {
            sets.union(local[&dev.terminals[0]], local[&dev.terminals[1]]);
        }
    }
    let mut key = vec![u32::MAX; nodes.len()];
    for &d in g.devices_in(s) {
        for (t, node) in g.device(d).terminals.iter().enumerate() {
            let root = sets.find(local[node]);
            key[root] = key[root].min(registry.terminal_id(d, t));
        }
    }
    (0..nodes.len())
        .map(|i| {
            let root = sets.find(i);
            (nodes[i], BusId(key[root]))
        })
        .collect()
}

/// Aggregates devices onto buses and links branches for a node → bus map.
fn assemble(g: &NodeBreakerGraph, node_bus: Vec<BusId>) -> BusBranchGraph {
    let mut buses: BTreeMap<BusId, Bus> = BTreeMap::new();
    let mut key_device: BTreeMap<BusId, (u32, usize)> = BTreeMap::new();
    let registry = BusRegistry::new(g);
    let mut generators = Vec::new();

    for (d, dev) in g.devices().iter().enumerate() {
        let mut seen: Vec<BusId> = Vec::with_capacity(2);
        for (t, &node) in dev.terminals.iter().enumerate() {
            let id = node_bus[node];
            let bus = buses.entry(id).or_insert_with(|| {
                let mut b = Bus::new(id.0, BusType::PQ);
                b.name.clear();
                b
            });
            let rid = registry.terminal_id(d, t);
            let entry = key_device.entry(id).or_insert((rid, d));
            if rid < entry.0 {
                *entry = (rid, d);
            }
            if seen.contains(&id) {
                continue;
            }
            seen.push(id);
            bus.members.push(d);
            match dev.params {
                DeviceParams::Load { p, q } => {
                    bus.p_inj -= p;
                    bus.q_inj -= q;
                }
                DeviceParams::Generator { p, q, v_set, slack } => {
                    bus.p_inj += p;
                    bus.q_inj += q;
                    if bus.bus_type == BusType::PQ {
                        bus.bus_type = BusType::PV;
                        bus.v = v_set;
                    }
                    bus.slack_candidate |= slack;
                    generators.push(GeneratorUnit { name: dev.id.clone(), bus: id, p, q, v_set, slack_candidate: slack });
                }
                DeviceParams::Shunt { g: gs, b: bs } => {
                    bus.g_shunt += gs;
                    bus.b_shunt += bs;
                }
                _ => {}
            }
        }
    }
    for (id, (_, d)) in &key_device {
        if let Some(b) = buses.get_mut(id) {
            b.name = g.device(*d).id.clone();
        }
    }

    let mut branches = Vec::with_capacity(g.links().len());
    let mut link_buses = Vec::with_capacity(g.links().len());
    for (i, link) in g.links().iter().enumerate() {
        let from = node_bus[g.device(link.from).terminals[0]];
        let to = node_bus[g.device(link.to).terminals[0]];
        link_buses.push([from, to]);
        if from == to {
            // both ends merged into one bus: the branch carries no flow
            continue;
        }
        let p = link.params;
        branches.push(Branch {
            id: BranchId(i as u32 + 1),
            name: link.id.clone(),
            from,
            to,
            r: p.r,
            x: p.x,
            b: p.b,
            tap: p.tap,
            rate: p.rate,
            status: if p.in_service { BranchStatus::In } else { BranchStatus::Out },
        });
    }

    let provenance = TopologyProvenance {
        node_bus,
        switch_states: g.switch_statuses(),
        link_buses,
    };
    BusBranchGraph::new(g.mva_base, g.v_band, buses.into_values().collect(), branches, generators)
        .expect("topology processing yields a structurally valid graph")
        .with_provenance(provenance)
}

fn topology_differs(prev: &BusBranchGraph, next: &BusBranchGraph) -> bool {
    let partition = |g: &BusBranchGraph| -> Vec<(BusId, Vec<usize>)> {
        g.buses().iter().map(|b| (b.id, b.members.clone())).collect()
    };
    let links = |g: &BusBranchGraph| -> Vec<(BranchId, BusId, BusId, BranchStatus)> {
        g.branches().iter().map(|b| (b.id, b.from, b.to, b.status)).collect()
    };
    partition(prev) != partition(next) || links(prev) != links(next)
}

/// Canonical form of a bus-branch graph, independent of bus numbering: buses
/// ordered by member-device sets and branches referring to buses by those sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalGraph {
    pub buses: Vec<CanonicalBus>,
    pub branches: Vec<CanonicalBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalBus {
    pub members: Vec<usize>,
    pub bus_type: BusType,
    pub v: f64,
    pub p_inj: f64,
    pub q_inj: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub energized: bool,
    /// Members of the first bus of this bus's island.
    pub island: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalBranch {
    pub name: String,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub status: BranchStatus,
}

pub fn canonicalize(g: &BusBranchGraph) -> CanonicalGraph {
    let members = |id: BusId| g.bus(id).map(|b| b.members.clone()).unwrap_or_default();
    let mut island_key: BTreeMap<BusId, Vec<usize>> = BTreeMap::new();
    for (i, bus) in g.buses().iter().enumerate() {
        let key = island_key.entry(g.islands().label[i]).or_default();
        if key.is_empty() || bus.members < *key {
            *key = bus.members.clone();
        }
    }
    let mut buses: Vec<CanonicalBus> = g
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| CanonicalBus {
            members: b.members.clone(),
            bus_type: b.bus_type,
            v: b.v,
            p_inj: b.p_inj,
            q_inj: b.q_inj,
            g_shunt: b.g_shunt,
            b_shunt: b.b_shunt,
            energized: g.is_energized(i),
            island: island_key[&g.islands().label[i]].clone(),
        })
        .collect();
    buses.sort_by(|a, b| a.members.cmp(&b.members));
    let mut branches: Vec<CanonicalBranch> = g
        .branches()
        .iter()
        .map(|b| CanonicalBranch { name: b.name.clone(), from: members(b.from), to: members(b.to), status: b.status })
        .collect();
    branches.sort_by(|a, b| a.name.cmp(&b.name));
    CanonicalGraph { buses, branches }
}

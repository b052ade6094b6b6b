use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridModelError, StateVector, SwitchStatus, VoltageBand};
use crate::dsu::DisjointSets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusType {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub name: String,
    pub bus_type: BusType,
    /// Voltage magnitude: the setpoint for slack/PV buses, 1.0 otherwise.
    pub v: f64,
    pub theta: f64,
    pub p_inj: f64,
    pub q_inj: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub slack_candidate: bool,
    /// Node-breaker devices merged into this bus, ascending device index.
    pub members: Vec<usize>,
}

impl Bus {
    pub fn new(id: u32, bus_type: BusType) -> Self {
        Self {
            id: BusId(id),
            name: id.to_string(),
            bus_type,
            v: 1.0,
            theta: 0.0,
            p_inj: 0.0,
            q_inj: 0.0,
            g_shunt: 0.0,
            b_shunt: 0.0,
            slack_candidate: bus_type == BusType::Slack,
            members: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchStatus {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub name: String,
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub tap: f64,
    /// Apparent-power limit in per-unit; 0 means unlimited.
    pub rate: f64,
    pub status: BranchStatus,
}

impl Branch {
    pub fn new(id: u32, from: u32, to: u32, r: f64, x: f64, b: f64) -> Self {
        Self {
            id: BranchId(id),
            name: id.to_string(),
            from: BusId(from),
            to: BusId(to),
            r,
            x,
            b,
            tap: 1.0,
            rate: 0.0,
            status: BranchStatus::In,
        }
    }

    pub fn in_service(&self) -> bool {
        self.status == BranchStatus::In
    }

    /// Two-port admittances `[y_ff, y_ft, y_tf, y_tt]` of the π model with
    /// the tap on the from side.
    pub fn admittances(&self) -> [Complex64; 4] {
        let ys = Complex64::new(self.r, self.x).inv();
        let charging = Complex64::new(0.0, self.b / 2.0);
        let tap = self.tap;
        [
            (ys + charging) / (tap * tap),
            -ys / tap,
            -ys / tap,
            ys + charging,
        ]
    }
}

/// A generating unit aggregated onto a bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorUnit {
    pub name: String,
    pub bus: BusId,
    pub p: f64,
    pub q: f64,
    pub v_set: f64,
    pub slack_candidate: bool,
}

/// Connected components over in-service branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandLabeling {
    /// Per bus position: the smallest bus id of its island.
    pub label: Vec<BusId>,
    /// Per bus position: whether its island contains a slack candidate.
    pub energized: Vec<bool>,
}

impl IslandLabeling {
    pub fn island_count(&self) -> usize {
        let mut labels: Vec<BusId> = self.label.clone();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }
}

/// Link from the bus-branch model back to the node-breaker model it was
/// derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyProvenance {
    /// Bus owning each connectivity node.
    pub node_bus: Vec<BusId>,
    /// Switch statuses the partition was computed from (per device index).
    pub switch_states: Vec<Option<SwitchStatus>>,
    /// Bus of the terminal device at each link end, `[from, to]` per link.
    pub link_buses: Vec<[BusId; 2]>,
}

/// Analysis-level admittance graph: buses, branches and their incidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusBranchGraph {
    pub mva_base: f64,
    pub v_band: VoltageBand,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<GeneratorUnit>,
    #[serde(skip)]
    bus_pos: HashMap<BusId, usize>,
    #[serde(skip)]
    branch_pos: HashMap<BranchId, usize>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
    islands: IslandLabeling,
    #[serde(skip)]
    provenance: Option<Arc<TopologyProvenance>>,
}

impl BusBranchGraph {
    /// Validates and indexes a bus-branch model. Buses and branches are stored
    /// sorted by id; one slack is designated per energized island (the
    /// smallest-id slack candidate).
    pub fn new(
        mva_base: f64,
        v_band: VoltageBand,
        mut buses: Vec<Bus>,
        mut branches: Vec<Branch>,
        generators: Vec<GeneratorUnit>,
    ) -> Result<Self, GridModelError> {
        buses.sort_by_key(|b| b.id);
        branches.sort_by_key(|b| b.id);
        let mut bus_pos = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if bus_pos.insert(b.id, i).is_some() {
                return Err(GridModelError::DuplicateId { class: "bus", id: b.id.to_string() });
            }
            if !(b.v > 0.0) {
                return Err(GridModelError::InvalidValue { id: b.id.to_string(), field: "v" });
            }
        }
        let mut branch_pos = HashMap::with_capacity(branches.len());
        for (i, br) in branches.iter().enumerate() {
            if branch_pos.insert(br.id, i).is_some() {
                return Err(GridModelError::DuplicateId { class: "branch", id: br.id.to_string() });
            }
            for end in [br.from, br.to] {
                if !bus_pos.contains_key(&end) {
                    return Err(GridModelError::DanglingBranch { branch: br.id, bus: end });
                }
            }
            if br.from == br.to {
                return Err(GridModelError::SelfLoop(br.id.to_string()));
            }
            if !(br.tap > 0.0) {
                return Err(GridModelError::InvalidValue { id: br.id.to_string(), field: "tap" });
            }
        }
        for g in &generators {
            if !bus_pos.contains_key(&g.bus) {
                return Err(GridModelError::UnknownBus(g.bus));
            }
        }
        for b in &mut buses {
            b.slack_candidate |= b.bus_type == BusType::Slack;
        }
        let mut graph = Self {
            mva_base,
            v_band,
            buses,
            branches,
            generators,
            bus_pos,
            branch_pos,
            adjacency: Vec::new(),
            islands: IslandLabeling { label: Vec::new(), energized: Vec::new() },
            provenance: None,
        };
        graph.refresh_topology();
        Ok(graph)
    }

    /// Recomputes adjacency, islands and slack designation after a status change.
    fn refresh_topology(&mut self) {
        let n = self.buses.len();
        let mut adjacency = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            adjacency[self.bus_pos[&br.from]].push(k);
            adjacency[self.bus_pos[&br.to]].push(k);
        }
        self.adjacency = adjacency;
        self.islands = label_islands(self);

        // one slack per energized island: the smallest-id candidate
        let mut chosen: BTreeMap<BusId, BusId> = BTreeMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if b.slack_candidate {
                chosen.entry(self.islands.label[i]).or_insert(b.id);
            }
        }
        for i in 0..n {
            let island = self.islands.label[i];
            let bus = &mut self.buses[i];
            if chosen.get(&island) == Some(&bus.id) {
                bus.bus_type = BusType::Slack;
            } else if bus.bus_type == BusType::Slack {
                bus.bus_type = BusType::PV;
            }
        }
    }

    /// Restores lookup tables after deserialization.
    pub fn reindex(mut self) -> Self {
        self.bus_pos = self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        self.branch_pos = self.branches.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        self.refresh_topology();
        self
    }

    pub(crate) fn with_provenance(mut self, provenance: TopologyProvenance) -> Self {
        self.provenance = Some(Arc::new(provenance));
        self
    }

    pub fn provenance(&self) -> Option<&TopologyProvenance> {
        self.provenance.as_deref()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[GeneratorUnit] {
        &self.generators
    }

    pub fn bus_position(&self, id: BusId) -> Option<usize> {
        self.bus_pos.get(&id).copied()
    }

    pub fn branch_position(&self, id: BranchId) -> Option<usize> {
        self.branch_pos.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_position(id).map(|p| &self.buses[p])
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branch_position(id).map(|p| &self.branches[p])
    }

    /// Positions of branches incident to the bus at `pos` (any status).
    pub fn incident(&self, pos: usize) -> &[usize] {
        &self.adjacency[pos]
    }

    pub fn islands(&self) -> &IslandLabeling {
        &self.islands
    }

    pub fn is_energized(&self, pos: usize) -> bool {
        self.islands.energized[pos]
    }

    pub fn energized_buses(&self) -> impl Iterator<Item = (usize, &Bus)> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(i, _)| self.islands.energized[*i])
    }

    /// Copy of the graph with one branch's status replaced.
    pub fn with_branch_status(&self, id: BranchId, status: super::BranchStatus) -> Result<Self, GridModelError> {
        let pos = self.branch_position(id).ok_or(GridModelError::UnknownBranch(id))?;
        let mut g = self.clone();
        g.branches[pos].status = status;
        g.refresh_topology();
        Ok(g)
    }

    /// Copy of the graph with new scheduled injections at one bus.
    pub fn with_injection(&self, id: BusId, p: f64, q: f64) -> Result<Self, GridModelError> {
        let pos = self.bus_position(id).ok_or(GridModelError::UnknownBus(id))?;
        let mut g = self.clone();
        g.buses[pos].p_inj = p;
        g.buses[pos].q_inj = q;
        Ok(g)
    }

    /// Per-bus complex voltages for a state; zero at buses the state omits.
    pub fn phasors(&self, state: &StateVector) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.buses.len()];
        for (k, id) in state.buses.iter().enumerate() {
            if let Some(p) = self.bus_position(*id) {
                v[p] = Complex64::from_polar(state.vm[k], state.va[k]);
            }
        }
        v
    }

    /// Sum of scheduled bus injections `(P, Q)`.
    pub fn total_injection(&self) -> (f64, f64) {
        self.buses
            .iter()
            .fold((0.0, 0.0), |(p, q), b| (p + b.p_inj, q + b.q_inj))
    }
}

fn label_islands(g: &BusBranchGraph) -> IslandLabeling {
    let n = g.buses.len();
    let mut sets = DisjointSets::new(n);
    for br in g.branches.iter().filter(|b| b.in_service()) {
        sets.union(g.bus_pos[&br.from], g.bus_pos[&br.to]);
    }
    let mut min_id: HashMap<usize, BusId> = HashMap::new();
    let mut energized_root: HashMap<usize, bool> = HashMap::new();
    for (i, b) in g.buses.iter().enumerate() {
        let root = sets.find(i);
        // buses are sorted, so the first bus seen per root has the smallest id
        min_id.entry(root).or_insert(b.id);
        *energized_root.entry(root).or_insert(false) |= b.slack_candidate;
    }
    let mut label = Vec::with_capacity(n);
    let mut energized = Vec::with_capacity(n);
    for i in 0..n {
        let root = sets.find(i);
        label.push(min_id[&root]);
        energized.push(energized_root[&root]);
    }
    IslandLabeling { label, energized }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::BranchStatus;

    fn path3() -> BusBranchGraph {
        let buses = vec![Bus::new(1, BusType::Slack), Bus::new(2, BusType::PQ), Bus::new(3, BusType::PQ)];
        let branches = vec![Branch::new(1, 1, 2, 0.0, 0.1, 0.0), Branch::new(2, 2, 3, 0.0, 0.1, 0.0)];
        BusBranchGraph::new(100.0, VoltageBand::default(), buses, branches, vec![]).unwrap()
    }

    #[test]
    fn islands_follow_branch_status() {
        let g = path3();
        assert_eq!(g.islands().island_count(), 1);
        let cut = g.with_branch_status(BranchId(2), BranchStatus::Out).unwrap();
        assert_eq!(cut.islands().label, vec![BusId(1), BusId(1), BusId(3)]);
        assert_eq!(cut.islands().energized, vec![true, true, false]);
    }

    #[test]
    fn structural_errors() {
        let buses = vec![Bus::new(1, BusType::Slack)];
        let dangling = vec![Branch::new(1, 1, 9, 0.0, 0.1, 0.0)];
        assert!(matches!(
            BusBranchGraph::new(100.0, VoltageBand::default(), buses.clone(), dangling, vec![]),
            Err(GridModelError::DanglingBranch { bus: BusId(9), .. })
        ));
        let dup = vec![Bus::new(1, BusType::Slack), Bus::new(1, BusType::PQ)];
        assert!(BusBranchGraph::new(100.0, VoltageBand::default(), dup, vec![], vec![]).is_err());
    }

    #[test]
    fn one_slack_per_island() {
        let mut buses = vec![Bus::new(1, BusType::Slack), Bus::new(2, BusType::Slack)];
        buses[1].v = 1.02;
        let g = BusBranchGraph::new(
            100.0,
            VoltageBand::default(),
            buses,
            vec![Branch::new(1, 1, 2, 0.0, 0.1, 0.0)],
            vec![],
        )
        .unwrap();
        assert_eq!(g.buses()[0].bus_type, BusType::Slack);
        assert_eq!(g.buses()[1].bus_type, BusType::PV);
    }
}

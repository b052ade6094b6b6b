//! Grid models and the evolving snapshot sequence.
//!
//! Two graph views of the same network live here:
//!
//! * [`NodeBreakerGraph`]: the physical model. Substations hold devices whose
//!   terminals meet at connectivity nodes; breakers and disconnectors join two
//!   nodes when closed; lines and transformers ([`Link`]) join terminal
//!   devices, usually in different substations.
//! * [`BusBranchGraph`]: the analysis model produced by topology processing.
//!   Buses are vertices, branches are edges, and its incidence is the
//!   structure of the nodal admittance matrix ([`build_admittance`]).
//!
//! [`EvolvingSequence`] strings snapshots together in time: a base
//! [`GridState`], the [`SnapshotDelta`]s applied since, and cached artifacts
//! per committed timestamp.
//!
//! All electrical quantities are per-unit on the model's `mva_base`; angles
//! are radians; timestamps are integer milliseconds.

mod admittance;
mod bus_branch;
mod measurement;
mod node_breaker;
mod snapshot;

pub use admittance::{build_admittance, Admittance, BranchAdmittance};
pub use bus_branch::{
    Branch, BranchId, BranchStatus, Bus, BusBranchGraph, BusId, BusType, GeneratorUnit, IslandLabeling,
    TopologyProvenance,
};
pub use measurement::{
    MeasurementDef, MeasurementKind, MeasurementSet, MeasurementSite, DEFAULT_SIGMA_POWER, DEFAULT_SIGMA_VOLTAGE,
};
pub use node_breaker::{
    ConnectivityNode, Device, DeviceKind, DeviceParams, Link, LinkKind, LinkParams, NodeBreakerBuilder,
    NodeBreakerGraph, Substation, SwitchStatus,
};
pub use snapshot::{ChangeSet, EvolvingSequence, GridState, SnapshotDelta, Timestamp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridModelError {
    #[error("duplicate {class} id `{id}`")]
    DuplicateId { class: &'static str, id: String },
    #[error("unknown substation `{0}`")]
    UnknownSubstation(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("unknown measurement `{0}`")]
    UnknownMeasurement(String),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("device `{0}` is not a breaker or disconnector")]
    NotASwitch(String),
    #[error("device `{0}` is not a load or generator")]
    NotAnInjection(String),
    #[error("line `{0}` has both ends in one substation")]
    LineWithinSubstation(String),
    #[error("`{0}` connects a node to itself")]
    SelfLoop(String),
    #[error("branch `{0}` has zero reactance")]
    ZeroReactance(String),
    #[error("branch {branch} references missing bus {bus}")]
    DanglingBranch { branch: BranchId, bus: BusId },
    #[error("invalid `{field}` on `{id}`")]
    InvalidValue { id: String, field: &'static str },
    #[error("delta timestamp {delta} precedes head timestamp {head}")]
    NonMonotoneTimestamp { head: Timestamp, delta: Timestamp },
}

/// Which end of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchEnd {
    From,
    To,
}

/// Acceptable voltage-magnitude band, per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub min: f64,
    pub max: f64,
}

impl Default for VoltageBand {
    fn default() -> Self {
        Self { min: 0.94, max: 1.06 }
    }
}

/// Bus voltages of the energized part of a network, ordered by bus id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub buses: Vec<BusId>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl StateVector {
    /// Flat start: slack/PV buses at their setpoint, others at 1.0, all angles 0.
    pub fn flat(graph: &BusBranchGraph) -> Self {
        let mut s = Self { buses: Vec::new(), vm: Vec::new(), va: Vec::new() };
        for (_, bus) in graph.energized_buses() {
            s.buses.push(bus.id);
            s.vm.push(match bus.bus_type {
                BusType::PQ => 1.0,
                _ => bus.v,
            });
            s.va.push(0.0);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn position(&self, id: BusId) -> Option<usize> {
        self.buses.binary_search(&id).ok()
    }

    pub fn get(&self, id: BusId) -> Option<(f64, f64)> {
        self.position(id).map(|k| (self.vm[k], self.va[k]))
    }

    /// Largest magnitude and angle differences over buses present in both states.
    pub fn max_difference(&self, other: &StateVector) -> (f64, f64) {
        let mut dv: f64 = 0.0;
        let mut da: f64 = 0.0;
        for (k, id) in self.buses.iter().enumerate() {
            if let Some((vm, va)) = other.get(*id) {
                dv = dv.max((self.vm[k] - vm).abs());
                da = da.max((self.va[k] - va).abs());
            }
        }
        if self.buses != other.buses {
            return (f64::INFINITY, f64::INFINITY);
        }
        (dv, da)
    }
}

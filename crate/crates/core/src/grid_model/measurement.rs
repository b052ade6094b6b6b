use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BranchEnd, GridModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementKind {
    VMagnitude,
    PInjection,
    QInjection,
    PFlow,
    QFlow,
}

impl MeasurementKind {
    pub fn default_sigma(self) -> f64 {
        match self {
            MeasurementKind::VMagnitude => DEFAULT_SIGMA_VOLTAGE,
            _ => DEFAULT_SIGMA_POWER,
        }
    }

    pub fn is_flow(self) -> bool {
        matches!(self, MeasurementKind::PFlow | MeasurementKind::QFlow)
    }
}

/// Standard deviation assumed for voltage meters when none is given.
pub const DEFAULT_SIGMA_VOLTAGE: f64 = 0.004;
/// Standard deviation assumed for flow and injection meters when none is given.
pub const DEFAULT_SIGMA_POWER: f64 = 0.01;

/// Where a meter sits in the node-breaker model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementSite {
    /// Bus quantity of the bus containing this device.
    Device(usize),
    /// Flow into the link at one end.
    LinkEnd { link: usize, end: BranchEnd },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDef {
    pub id: String,
    pub kind: MeasurementKind,
    pub site: MeasurementSite,
    pub sigma: f64,
    /// Latest telemetered value; `None` until first received.
    pub value: Option<f64>,
}

/// Measurement definitions with their current values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    defs: Vec<MeasurementDef>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl MeasurementSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, def: MeasurementDef) -> Result<usize, GridModelError> {
        if self.index.contains_key(&def.id) {
            return Err(GridModelError::DuplicateId { class: "measurement", id: def.id });
        }
        if !(def.sigma > 0.0) || !def.sigma.is_finite() {
            return Err(GridModelError::InvalidValue { id: def.id, field: "sigma" });
        }
        let idx = self.defs.len();
        self.index.insert(def.id.clone(), idx);
        self.defs.push(def);
        Ok(idx)
    }

    pub fn defs(&self) -> &[MeasurementDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn set_value(&mut self, idx: usize, value: f64) {
        self.defs[idx].value = Some(value);
    }

    pub fn reindex(mut self) -> Self {
        self.index = self.defs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        self
    }
}

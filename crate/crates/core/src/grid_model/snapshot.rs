use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GridModelError, MeasurementSet, NodeBreakerGraph, SwitchStatus};

/// Integer milliseconds.
pub type Timestamp = i64;

/// Everything telemetry can change between two snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDelta {
    pub t: Timestamp,
    /// Switch device id → new status.
    pub switches: Vec<(String, SwitchStatus)>,
    /// Measurement id → new value.
    pub measurements: Vec<(String, f64)>,
    /// Load/generator device id → new `(P, Q)`.
    pub injections: Vec<(String, f64, f64)>,
}

impl SnapshotDelta {
    pub fn empty(t: Timestamp) -> Self {
        Self { t, ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.switches.is_empty() && self.measurements.is_empty() && self.injections.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.switches.len() + self.measurements.len() + self.injections.len()
    }
}

/// What a delta actually changed, for the topology processor.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    /// Switch devices whose status differs from the previous snapshot.
    pub switches: BTreeSet<usize>,
    /// Substations containing a changed switch.
    pub topology_substations: BTreeSet<usize>,
    /// Substations containing a load/generator with changed injection.
    pub injection_substations: BTreeSet<usize>,
    pub measurements_updated: usize,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.switches.is_empty() && self.injection_substations.is_empty() && self.measurements_updated == 0
    }

    /// Every substation touched by the delta.
    pub fn substations(&self) -> BTreeSet<usize> {
        self.topology_substations.union(&self.injection_substations).copied().collect()
    }

    pub fn merge(&mut self, other: &ChangeSet) {
        self.switches.extend(&other.switches);
        self.topology_substations.extend(&other.topology_substations);
        self.injection_substations.extend(&other.injection_substations);
        self.measurements_updated += other.measurements_updated;
    }
}

/// Node-breaker model plus telemetry at one point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub t: Timestamp,
    pub grid: NodeBreakerGraph,
    pub measurements: MeasurementSet,
}

impl GridState {
    pub fn new(t: Timestamp, grid: NodeBreakerGraph, measurements: MeasurementSet) -> Self {
        Self { t, grid, measurements }
    }

    /// Applies a delta in place. Every referenced id is resolved before any
    /// change is made, so a rejected delta leaves the state untouched.
    pub fn apply(&mut self, delta: &SnapshotDelta) -> Result<ChangeSet, GridModelError> {
        if delta.t < self.t {
            return Err(GridModelError::NonMonotoneTimestamp { head: self.t, delta: delta.t });
        }
        let switches = delta
            .switches
            .iter()
            .map(|(id, status)| {
                let idx = self.grid.device_index(id).ok_or_else(|| GridModelError::UnknownDevice(id.clone()))?;
                if !self.grid.device(idx).kind.is_switch() {
                    return Err(GridModelError::NotASwitch(id.clone()));
                }
                Ok((idx, *status))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let injections = delta
            .injections
            .iter()
            .map(|(id, p, q)| {
                let idx = self.grid.device_index(id).ok_or_else(|| GridModelError::UnknownDevice(id.clone()))?;
                if !matches!(
                    self.grid.device(idx).params,
                    super::DeviceParams::Load { .. } | super::DeviceParams::Generator { .. }
                ) {
                    return Err(GridModelError::NotAnInjection(id.clone()));
                }
                Ok((idx, *p, *q))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let measurements = delta
            .measurements
            .iter()
            .map(|(id, v)| {
                self.measurements
                    .index_of(id)
                    .map(|i| (i, *v))
                    .ok_or_else(|| GridModelError::UnknownMeasurement(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let before = self.grid.switch_statuses();
        let mut changes = ChangeSet::default();
        for (idx, status) in switches {
            self.grid.set_switch(idx, status)?;
        }
        // A switch toggled twice within one delta is not a change.
        for (idx, (old, new)) in before.iter().zip(self.grid.switch_statuses()).enumerate() {
            if *old != new {
                changes.switches.insert(idx);
                changes.topology_substations.insert(self.grid.device(idx).substation);
            }
        }
        for (idx, p, q) in injections {
            if self.grid.set_injection(idx, p, q)? {
                changes.injection_substations.insert(self.grid.device(idx).substation);
            }
        }
        for (idx, v) in &measurements {
            self.measurements.set_value(*idx, *v);
        }
        changes.measurements_updated = measurements.len();
        self.t = delta.t;
        Ok(changes)
    }
}

/// A base snapshot, the deltas applied since, the current head, and derived
/// artifacts cached per committed timestamp.
///
/// `A` is whatever the analysis pipeline derives from a snapshot (bus-branch
/// model, factorizations, solved states). Committed artifacts are immutable
/// and shared by `Arc`; only [`EvolvingSequence::apply_delta`] mutates.
#[derive(Debug, Clone)]
pub struct EvolvingSequence<A = ()> {
    base: Arc<GridState>,
    deltas: Vec<SnapshotDelta>,
    head: GridState,
    artifacts: BTreeMap<Timestamp, Arc<A>>,
    retain: usize,
}

impl<A> EvolvingSequence<A> {
    pub fn new(base: GridState) -> Self {
        Self {
            head: base.clone(),
            base: Arc::new(base),
            deltas: Vec::new(),
            artifacts: BTreeMap::new(),
            retain: 16,
        }
    }

    /// Keeps artifacts of at most `n` timestamps (at least one).
    pub fn with_retention(mut self, n: usize) -> Self {
        self.retain = n.max(1);
        self
    }

    pub fn base(&self) -> &GridState {
        &self.base
    }

    pub fn head(&self) -> &GridState {
        &self.head
    }

    pub fn deltas(&self) -> &[SnapshotDelta] {
        &self.deltas
    }

    /// Advances the head by one delta and records the change-set.
    pub fn apply_delta(&mut self, delta: SnapshotDelta) -> Result<ChangeSet, GridModelError> {
        let changes = self.head.apply(&delta)?;
        self.deltas.push(delta);
        Ok(changes)
    }

    /// Rebuilds the state at the k-th delta (0 = base) from the base snapshot.
    pub fn replay(&self, k: usize) -> Result<GridState, GridModelError> {
        let mut state = (*self.base).clone();
        for d in self.deltas.iter().take(k) {
            state.apply(d)?;
        }
        Ok(state)
    }

    pub fn commit(&mut self, t: Timestamp, artifacts: A) -> Arc<A> {
        let arc = Arc::new(artifacts);
        self.artifacts.insert(t, Arc::clone(&arc));
        while self.artifacts.len() > self.retain {
            self.artifacts.pop_first();
        }
        arc
    }

    pub fn artifacts(&self, t: Timestamp) -> Option<&Arc<A>> {
        self.artifacts.get(&t)
    }

    pub fn latest_artifacts(&self) -> Option<(Timestamp, &Arc<A>)> {
        self.artifacts.last_key_value().map(|(t, a)| (*t, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{DeviceKind, MeasurementDef, MeasurementKind, MeasurementSite};

    fn state() -> GridState {
        let mut b = NodeBreakerGraph::builder(100.0);
        b.substation("A", "a").unwrap();
        b.substation("B", "b").unwrap();
        b.busbar("BA", "A", "1").unwrap();
        b.busbar("BB", "B", "1").unwrap();
        b.switch("KA", DeviceKind::CircuitBreaker, "A", ("1", "2"), SwitchStatus::Closed).unwrap();
        b.switch("KB", DeviceKind::Disconnector, "B", ("1", "2"), SwitchStatus::Closed).unwrap();
        let ld = b.load("LD", "B", "1", 0.5, 0.2).unwrap();
        let g = b.build();
        let mut m = MeasurementSet::new();
        m.push(MeasurementDef {
            id: "M1".into(),
            kind: MeasurementKind::PInjection,
            site: MeasurementSite::Device(ld),
            sigma: 0.01,
            value: None,
        })
        .unwrap();
        GridState::new(0, g, m)
    }

    #[test]
    fn empty_delta_changes_nothing() {
        let mut seq: EvolvingSequence = EvolvingSequence::new(state());
        let before = seq.head().clone();
        let cs = seq.apply_delta(SnapshotDelta::empty(10)).unwrap();
        assert!(cs.is_empty());
        assert_eq!(seq.head().grid, before.grid);
        assert_eq!(seq.head().t, 10);
    }

    #[test]
    fn breaker_toggle_touches_its_substation() {
        let mut seq: EvolvingSequence = EvolvingSequence::new(state());
        let mut d = SnapshotDelta::empty(5);
        d.switches.push(("KB".into(), SwitchStatus::Open));
        let cs = seq.apply_delta(d).unwrap();
        assert_eq!(cs.topology_substations, BTreeSet::from([1]));
        assert_eq!(cs.switches.len(), 1);
    }

    #[test]
    fn unknown_ids_leave_sequence_unchanged() {
        let mut seq: EvolvingSequence = EvolvingSequence::new(state());
        let before = seq.head().clone();
        let mut d = SnapshotDelta::empty(5);
        d.switches.push(("KA".into(), SwitchStatus::Open));
        d.measurements.push(("NOPE".into(), 1.0));
        assert!(matches!(seq.apply_delta(d), Err(GridModelError::UnknownMeasurement(_))));
        assert_eq!(seq.head(), &before);
        assert!(seq.deltas().is_empty());

        let mut d = SnapshotDelta::empty(5);
        d.injections.push(("KA".into(), 1.0, 0.0));
        assert!(matches!(seq.apply_delta(d), Err(GridModelError::NotAnInjection(_))));
    }

    #[test]
    fn timestamps_must_not_decrease() {
        let mut seq: EvolvingSequence = EvolvingSequence::new(state());
        seq.apply_delta(SnapshotDelta::empty(10)).unwrap();
        assert!(matches!(
            seq.apply_delta(SnapshotDelta::empty(9)),
            Err(GridModelError::NonMonotoneTimestamp { head: 10, delta: 9 })
        ));
        seq.apply_delta(SnapshotDelta::empty(10)).unwrap();
    }

    #[test]
    fn artifact_retention() {
        let mut seq: EvolvingSequence<u32> = EvolvingSequence::new(state()).with_retention(2);
        for t in 0..5 {
            seq.commit(t, t as u32);
        }
        assert!(seq.artifacts(2).is_none());
        assert_eq!(seq.latest_artifacts().map(|(t, a)| (t, **a)), Some((4, 4)));
    }
}

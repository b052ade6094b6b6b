use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BranchEnd, GridModelError, VoltageBand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceKind {
    BusbarSection,
    CircuitBreaker,
    Disconnector,
    Load,
    Generator,
    TransformerWinding,
    LineTerminal,
    Shunt,
}

impl DeviceKind {
    pub fn is_switch(self) -> bool {
        matches!(self, DeviceKind::CircuitBreaker | DeviceKind::Disconnector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchStatus {
    Open,
    Closed,
}

impl SwitchStatus {
    pub fn is_closed(self) -> bool {
        self == SwitchStatus::Closed
    }

    pub fn toggled(self) -> Self {
        match self {
            SwitchStatus::Open => SwitchStatus::Closed,
            SwitchStatus::Closed => SwitchStatus::Open,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: String,
    pub name: String,
}

/// A named connection point inside a substation; device terminals that
/// reference the same node are hard-connected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConnectivityNode {
    pub substation: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeviceParams {
    Busbar,
    Switch { status: SwitchStatus },
    Load { p: f64, q: f64 },
    Generator { p: f64, q: f64, v_set: f64, slack: bool },
    Shunt { g: f64, b: f64 },
    LinkEnd { link: usize, end: BranchEnd },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub substation: usize,
    pub kind: DeviceKind,
    /// Connectivity-node indices, one per electrical terminal.
    pub terminals: Vec<usize>,
    pub params: DeviceParams,
}

impl Device {
    pub fn switch_status(&self) -> Option<SwitchStatus> {
        match self.params {
            DeviceParams::Switch { status } => Some(status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Line,
    Transformer,
}

/// Electrical parameters of a line or two-winding transformer, per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Off-nominal tap ratio on the from side.
    pub tap: f64,
    /// Apparent-power limit; 0 means unlimited.
    pub rate: f64,
    pub in_service: bool,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            r: 0.0,
            x: 0.1,
            b: 0.0,
            tap: 1.0,
            rate: 0.0,
            in_service: true,
        }
    }
}

/// An impedance connection between two terminal devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub kind: LinkKind,
    /// Device index of the from-end terminal device.
    pub from: usize,
    pub to: usize,
    pub params: LinkParams,
}

impl Link {
    pub fn end_device(&self, end: BranchEnd) -> usize {
        match end {
            BranchEnd::From => self.from,
            BranchEnd::To => self.to,
        }
    }
}

/// Physical substation/device graph with switch statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeBreakerGraph {
    pub mva_base: f64,
    pub v_band: VoltageBand,
    substations: Vec<Substation>,
    nodes: Vec<ConnectivityNode>,
    devices: Vec<Device>,
    links: Vec<Link>,
    #[serde(skip)]
    index: Index,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Index {
    substations: HashMap<String, usize>,
    devices: HashMap<String, usize>,
    links: HashMap<String, usize>,
    nodes: HashMap<(usize, String), usize>,
    /// Device indices per substation, ascending.
    by_substation: Vec<Vec<usize>>,
    /// Node indices per substation, ascending.
    nodes_by_substation: Vec<Vec<usize>>,
}

impl NodeBreakerGraph {
    pub fn builder(mva_base: f64) -> NodeBreakerBuilder {
        NodeBreakerBuilder {
            graph: NodeBreakerGraph {
                mva_base,
                v_band: VoltageBand::default(),
                substations: Vec::new(),
                nodes: Vec::new(),
                devices: Vec::new(),
                links: Vec::new(),
                index: Index::default(),
            },
        }
    }

    pub fn substations(&self) -> &[Substation] {
        &self.substations
    }

    pub fn nodes(&self) -> &[ConnectivityNode] {
        &self.nodes
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn device(&self, idx: usize) -> &Device {
        &self.devices[idx]
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    pub fn substation_index(&self, id: &str) -> Option<usize> {
        self.index.substations.get(id).copied()
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.index.devices.get(id).copied()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.index.links.get(id).copied()
    }

    pub fn devices_in(&self, substation: usize) -> &[usize] {
        &self.index.by_substation[substation]
    }

    pub fn nodes_in(&self, substation: usize) -> &[usize] {
        &self.index.nodes_by_substation[substation]
    }

    /// Switchable devices (breakers and disconnectors), ascending.
    pub fn switches(&self) -> impl Iterator<Item = usize> + '_ {
        self.devices
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind.is_switch())
            .map(|(i, _)| i)
    }

    /// Status of every device, `None` for non-switches.
    pub fn switch_statuses(&self) -> Vec<Option<SwitchStatus>> {
        self.devices.iter().map(Device::switch_status).collect()
    }

    pub fn set_switch(&mut self, device: usize, status: SwitchStatus) -> Result<bool, GridModelError> {
        let d = &mut self.devices[device];
        match &mut d.params {
            DeviceParams::Switch { status: s } => {
                let changed = *s != status;
                *s = status;
                Ok(changed)
            }
            _ => Err(GridModelError::NotASwitch(d.id.clone())),
        }
    }

    /// Replaces the active/reactive power of a load or generator.
    pub fn set_injection(&mut self, device: usize, p_new: f64, q_new: f64) -> Result<bool, GridModelError> {
        let d = &mut self.devices[device];
        match &mut d.params {
            DeviceParams::Load { p, q } | DeviceParams::Generator { p, q, .. } => {
                let changed = *p != p_new || *q != q_new;
                *p = p_new;
                *q = q_new;
                Ok(changed)
            }
            _ => Err(GridModelError::NotAnInjection(d.id.clone())),
        }
    }

    fn rebuild_index(&mut self) {
        let mut index = Index {
            by_substation: vec![Vec::new(); self.substations.len()],
            nodes_by_substation: vec![Vec::new(); self.substations.len()],
            ..Index::default()
        };
        for (i, s) in self.substations.iter().enumerate() {
            index.substations.insert(s.id.clone(), i);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            index.nodes.insert((n.substation, n.name.clone()), i);
            index.nodes_by_substation[n.substation].push(i);
        }
        for (i, d) in self.devices.iter().enumerate() {
            index.devices.insert(d.id.clone(), i);
            index.by_substation[d.substation].push(i);
        }
        for (i, l) in self.links.iter().enumerate() {
            index.links.insert(l.id.clone(), i);
        }
        self.index = index;
    }

    /// Restores lookup tables after deserialization.
    pub fn reindex(mut self) -> Self {
        self.rebuild_index();
        self
    }
}

/// Incremental, validating constructor for [`NodeBreakerGraph`].
#[derive(Debug, Clone)]
pub struct NodeBreakerBuilder {
    graph: NodeBreakerGraph,
}

impl NodeBreakerBuilder {
    pub fn v_band(&mut self, band: VoltageBand) -> &mut Self {
        self.graph.v_band = band;
        self
    }

    pub fn substation(&mut self, id: &str, name: &str) -> Result<usize, GridModelError> {
        let g = &mut self.graph;
        if g.index.substations.contains_key(id) {
            return Err(GridModelError::DuplicateId { class: "substation", id: id.to_string() });
        }
        let idx = g.substations.len();
        g.substations.push(Substation { id: id.to_string(), name: name.to_string() });
        g.index.substations.insert(id.to_string(), idx);
        g.index.by_substation.push(Vec::new());
        g.index.nodes_by_substation.push(Vec::new());
        Ok(idx)
    }

    fn substation_idx(&self, id: &str) -> Result<usize, GridModelError> {
        self.graph
            .substation_index(id)
            .ok_or_else(|| GridModelError::UnknownSubstation(id.to_string()))
    }

    fn node(&mut self, substation: usize, name: &str) -> usize {
        let g = &mut self.graph;
        let key = (substation, name.to_string());
        if let Some(&n) = g.index.nodes.get(&key) {
            return n;
        }
        let idx = g.nodes.len();
        g.nodes.push(ConnectivityNode { substation, name: name.to_string() });
        g.index.nodes.insert(key, idx);
        g.index.nodes_by_substation[substation].push(idx);
        idx
    }

    fn push_device(
        &mut self,
        id: &str,
        substation: &str,
        kind: DeviceKind,
        nodes: &[&str],
        params: DeviceParams,
    ) -> Result<usize, GridModelError> {
        if self.graph.index.devices.contains_key(id) {
            return Err(GridModelError::DuplicateId { class: "device", id: id.to_string() });
        }
        let sub = self.substation_idx(substation)?;
        let terminals = nodes.iter().map(|n| self.node(sub, n)).collect();
        let g = &mut self.graph;
        let idx = g.devices.len();
        g.devices.push(Device { id: id.to_string(), substation: sub, kind, terminals, params });
        g.index.devices.insert(id.to_string(), idx);
        g.index.by_substation[sub].push(idx);
        Ok(idx)
    }

    pub fn busbar(&mut self, id: &str, substation: &str, node: &str) -> Result<usize, GridModelError> {
        self.push_device(id, substation, DeviceKind::BusbarSection, &[node], DeviceParams::Busbar)
    }

    pub fn switch(
        &mut self,
        id: &str,
        kind: DeviceKind,
        substation: &str,
        nodes: (&str, &str),
        status: SwitchStatus,
    ) -> Result<usize, GridModelError> {
        if !kind.is_switch() {
            return Err(GridModelError::NotASwitch(id.to_string()));
        }
        if nodes.0 == nodes.1 {
            return Err(GridModelError::SelfLoop(id.to_string()));
        }
        self.push_device(id, substation, kind, &[nodes.0, nodes.1], DeviceParams::Switch { status })
    }

    pub fn load(&mut self, id: &str, substation: &str, node: &str, p: f64, q: f64) -> Result<usize, GridModelError> {
        self.push_device(id, substation, DeviceKind::Load, &[node], DeviceParams::Load { p, q })
    }

    pub fn generator(
        &mut self,
        id: &str,
        substation: &str,
        node: &str,
        p: f64,
        q: f64,
        v_set: f64,
        slack: bool,
    ) -> Result<usize, GridModelError> {
        if !(v_set > 0.0) {
            return Err(GridModelError::InvalidValue { id: id.to_string(), field: "v_set" });
        }
        self.push_device(id, substation, DeviceKind::Generator, &[node], DeviceParams::Generator { p, q, v_set, slack })
    }

    pub fn shunt(&mut self, id: &str, substation: &str, node: &str, g: f64, b: f64) -> Result<usize, GridModelError> {
        self.push_device(id, substation, DeviceKind::Shunt, &[node], DeviceParams::Shunt { g, b })
    }

    /// Adds a line or transformer together with its two terminal devices,
    /// named `<id>.from` and `<id>.to`.
    pub fn link(
        &mut self,
        id: &str,
        kind: LinkKind,
        from: (&str, &str),
        to: (&str, &str),
        params: LinkParams,
    ) -> Result<usize, GridModelError> {
        if self.graph.index.links.contains_key(id) {
            return Err(GridModelError::DuplicateId { class: "link", id: id.to_string() });
        }
        let (fs, ts) = (self.substation_idx(from.0)?, self.substation_idx(to.0)?);
        if kind == LinkKind::Line && fs == ts {
            return Err(GridModelError::LineWithinSubstation(id.to_string()));
        }
        if fs == ts && from.1 == to.1 {
            return Err(GridModelError::SelfLoop(id.to_string()));
        }
        if params.x == 0.0 || !params.x.is_finite() {
            return Err(GridModelError::ZeroReactance(id.to_string()));
        }
        if !(params.tap > 0.0) {
            return Err(GridModelError::InvalidValue { id: id.to_string(), field: "tap" });
        }
        let link = self.graph.links.len();
        let term_kind = match kind {
            LinkKind::Line => DeviceKind::LineTerminal,
            LinkKind::Transformer => DeviceKind::TransformerWinding,
        };
        let f = self.push_device(
            &format!("{id}.from"),
            from.0,
            term_kind,
            &[from.1],
            DeviceParams::LinkEnd { link, end: BranchEnd::From },
        )?;
        let t = self.push_device(
            &format!("{id}.to"),
            to.0,
            term_kind,
            &[to.1],
            DeviceParams::LinkEnd { link, end: BranchEnd::To },
        )?;
        let g = &mut self.graph;
        g.links.push(Link { id: id.to_string(), kind, from: f, to: t, params });
        g.index.links.insert(id.to_string(), link);
        Ok(link)
    }

    pub fn build(self) -> NodeBreakerGraph {
        self.graph
    }
}

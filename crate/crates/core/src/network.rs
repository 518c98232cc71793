use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::series::Series;
use crate::source::SourceKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    /// Generates water of one kind, at most `availability` hm³/day
    /// (unbounded when absent).
    Source {
        source_kind: SourceKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        availability: Option<Series>,
    },
    /// Carries volume between days, hm³.
    Storage {
        min_volume: f64,
        max_volume: f64,
        initial_volume: f64,
        /// Origin of the initial volume; defaults to the first kind that can
        /// reach the storage.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_kind: Option<SourceKind>,
        /// Largest total release over the planning horizon, hm³.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_release: Option<f64>,
    },
    Junction,
    /// Withdrawal point of a demand unit.
    Demand { unit: String },
    /// Terminal outflow that absorbs any volume.
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn new(id: &str, kind: NodeKind) -> Self {
        Node { id: id.into(), kind }
    }

    pub fn source(id: &str, kind: SourceKind, availability: Option<Series>) -> Self {
        Node::new(
            id,
            NodeKind::Source {
                source_kind: kind,
                availability,
            },
        )
    }

    pub fn storage(id: &str, min_volume: f64, max_volume: f64, initial_volume: f64) -> Self {
        Node::new(
            id,
            NodeKind::Storage {
                min_volume,
                max_volume,
                initial_volume,
                initial_kind: None,
                max_release: None,
            },
        )
    }

    pub fn demand(id: &str, unit: &str) -> Self {
        Node::new(id, NodeKind::Demand { unit: unit.to_owned() })
    }

    pub fn is_storage(&self) -> bool {
        matches!(self.kind, NodeKind::Storage { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// Defaults to `from->to`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: NodeId,
    pub to: NodeId,
    /// hm³/day; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Series>,
    /// Mandatory minimum flow, hm³/day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecological_min: Option<Series>,
    /// Fraction of the entering flow lost in transit.
    #[serde(default)]
    pub loss_fraction: f64,
    /// When set, the link is either idle or carries at least this much
    /// (hm³/day); requires binary rules and a finite capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_when_active: Option<f64>,
}

impl Link {
    pub fn new(from: &str, to: &str) -> Self {
        Link {
            id: None,
            from: from.into(),
            to: to.into(),
            capacity: None,
            ecological_min: None,
            loss_fraction: 0.0,
            min_when_active: None,
        }
    }

    pub fn with_capacity(mut self, cap: impl Into<Series>) -> Self {
        self.capacity = Some(cap.into());
        self
    }

    pub fn with_ecological_min(mut self, min: impl Into<Series>) -> Self {
        self.ecological_min = Some(min.into());
        self
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss_fraction = loss;
        self
    }

    pub fn key(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}->{}", self.from, self.to))
    }

    pub fn capacity_at(&self, t: usize) -> f64 {
        self.capacity.as_ref().map_or(f64::INFINITY, |c| c.at(t))
    }

    pub fn ecological_min_at(&self, t: usize) -> f64 {
        self.ecological_min.as_ref().map_or(0.0, |c| c.at(t))
    }

    /// Fraction of entering flow that arrives.
    pub fn delivery(&self) -> f64 {
        1.0 - self.loss_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    /// Number of daily steps.
    #[serde(default)]
    pub horizon: usize,
}

impl NetworkModel {
    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn node_index(&self) -> BTreeMap<&NodeId, usize> {
        let mut m = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            m.entry(&n.id).or_insert(i);
        }
        m
    }

    /// Same network over the first `days` steps.
    pub fn truncated(&self, days: usize) -> NetworkModel {
        let cut = |s: &Option<Series>| s.as_ref().map(|s| s.truncated(days));
        NetworkModel {
            nodes: self
                .nodes
                .iter()
                .map(|n| match &n.kind {
                    NodeKind::Source {
                        source_kind,
                        availability,
                    } => Node::source(n.id.as_str(), *source_kind, cut(availability)),
                    _ => n.clone(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| Link {
                    capacity: cut(&l.capacity),
                    ecological_min: cut(&l.ecological_min),
                    ..l.clone()
                })
                .collect(),
            horizon: days.min(self.horizon),
        }
    }

    /// Source kinds that can be present at each node, by forward
    /// reachability from sources and from storages' initial volume.
    pub fn kinds_at_nodes(&self) -> Vec<BTreeSet<SourceKind>> {
        let index = self.node_index();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            if let (Some(&a), Some(&b)) = (index.get(&l.from), index.get(&l.to)) {
                out[a].push(b);
            }
        }
        let mut kinds: Vec<BTreeSet<SourceKind>> = vec![BTreeSet::new(); self.nodes.len()];
        let seed = |kinds: &mut Vec<BTreeSet<SourceKind>>, start: usize, k: SourceKind| {
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                if kinds[n].insert(k) {
                    queue.extend(out[n].iter().copied());
                }
            }
        };
        for (i, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Source { source_kind, .. } = n.kind {
                seed(&mut kinds, i, source_kind);
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Storage { initial_volume, .. } = n.kind {
                if initial_volume > 0.0 {
                    let k = self.initial_kind(i, &kinds);
                    seed(&mut kinds, i, k);
                }
            }
        }
        kinds
    }

    /// Kind attributed to storage `i`'s initial volume.
    pub fn initial_kind(&self, i: usize, kinds: &[BTreeSet<SourceKind>]) -> SourceKind {
        match &self.nodes[i].kind {
            NodeKind::Storage {
                initial_kind: Some(k),
                ..
            } => *k,
            _ => kinds[i].iter().next().copied().unwrap_or(SourceKind::Surface),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    fn new(code: &str, message: String) -> Self {
        Violation {
            code: code.to_owned(),
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, code: &str) -> usize {
        self.violations.iter().filter(|v| v.code == code).count()
    }
}

fn check_series(
    report: &mut ValidationReport,
    what: &str,
    s: &Option<Series>,
    horizon: usize,
    sign: impl Fn(f64) -> bool,
) {
    let Some(s) = s else { return };
    if !s.covers(horizon) {
        report.violations.push(Violation::new(
            "series length",
            format!("{what}: series covers {} of {horizon} days", s.len().unwrap_or(0)),
        ));
        return;
    }
    if !s.all(horizon, |v| v.is_finite() && sign(v)) {
        report
            .violations
            .push(Violation::new("series value", format!("{what}: values must be finite and >= 0")));
    }
}

/// Structural checks; an empty report means the network is well formed.
pub fn validate_network(net: &NetworkModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    if net.horizon == 0 {
        report.violations.push(Violation::new("horizon", "horizon must be at least one day".into()));
    }
    let mut seen = BTreeSet::new();
    for n in &net.nodes {
        if n.id.0.is_empty() {
            report.violations.push(Violation::new("empty id", "node with an empty id".into()));
        }
        if !seen.insert(&n.id) {
            report.violations.push(Violation::new("duplicate id", format!("node id `{}` is used twice", n.id)));
        }
        if let NodeKind::Storage {
            min_volume,
            max_volume,
            initial_volume,
            max_release,
            ..
        } = n.kind
        {
            let finite = [min_volume, max_volume, initial_volume].iter().all(|x| x.is_finite());
            if !(finite && 0.0 <= min_volume && min_volume <= initial_volume && initial_volume <= max_volume) {
                report.violations.push(Violation::new(
                    "storage bounds",
                    format!(
                        "storage `{}`: need 0 <= min {min_volume} <= initial {initial_volume} <= max {max_volume}",
                        n.id
                    ),
                ));
            }
            if max_release.is_some_and(|r| !(r >= 0.0)) {
                report.violations.push(Violation::new("storage bounds", format!("storage `{}`: negative max_release", n.id)));
            }
        }
        if let NodeKind::Demand { unit } = &n.kind {
            if unit.is_empty() {
                report.violations.push(Violation::new("demand reference", format!("demand node `{}` names no unit", n.id)));
            }
        }
    }
    let mut link_ids = BTreeSet::new();
    for l in &net.links {
        let key = l.key();
        if !link_ids.insert(key.clone()) {
            report.violations.push(Violation::new("duplicate id", format!("link id `{key}` is used twice")));
        }
        for end in [&l.from, &l.to] {
            if !seen.contains(end) {
                report.violations.push(Violation::new(
                    "dangling endpoint",
                    format!("link `{key}` references missing node `{end}`"),
                ));
            }
        }
        if l.from == l.to {
            report.violations.push(Violation::new("self loop", format!("link `{key}` starts and ends at `{}`", l.from)));
        }
        if !(0.0..1.0).contains(&l.loss_fraction) {
            report.violations.push(Violation::new(
                "loss fraction",
                format!("link `{key}`: loss fraction {} outside [0, 1)", l.loss_fraction),
            ));
        }
        check_series(&mut report, &format!("link `{key}` capacity"), &l.capacity, net.horizon, |x| x >= 0.0);
        check_series(
            &mut report,
            &format!("link `{key}` ecological minimum"),
            &l.ecological_min,
            net.horizon,
            |x| x >= 0.0,
        );
        if let (Some(c), Some(e)) = (&l.capacity, &l.ecological_min) {
            if c.covers(net.horizon) && e.covers(net.horizon) {
                if let Some(t) = (0..net.horizon).find(|&t| c.at(t) < e.at(t)) {
                    report.violations.push(Violation::new(
                        "capacity below ecological minimum",
                        format!("link `{key}` day {t}: capacity {} < minimum {}", c.at(t), e.at(t)),
                    ));
                }
            }
        }
        if let Some(m) = l.min_when_active {
            if !(m > 0.0 && m.is_finite()) || l.capacity.is_none() {
                report.violations.push(Violation::new(
                    "activation threshold",
                    format!("link `{key}`: min_when_active needs a positive value and a finite capacity"),
                ));
            }
        }
    }
    for n in &net.nodes {
        if let NodeKind::Source { availability, .. } = &n.kind {
            check_series(&mut report, &format!("source `{}` availability", n.id), availability, net.horizon, |x| {
                x >= 0.0
            });
        }
    }
    // Every source must drain somewhere: a sink or a storage.
    let index = net.node_index();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); net.nodes.len()];
    for l in &net.links {
        if let (Some(&a), Some(&b)) = (index.get(&l.from), index.get(&l.to)) {
            out[a].push(b);
        }
    }
    for (i, n) in net.nodes.iter().enumerate() {
        if !matches!(n.kind, NodeKind::Source { .. }) {
            continue;
        }
        let mut visited = vec![false; net.nodes.len()];
        let mut queue = VecDeque::from([i]);
        visited[i] = true;
        let mut reached = false;
        while let Some(x) = queue.pop_front() {
            if x != i && matches!(net.nodes[x].kind, NodeKind::Sink | NodeKind::Storage { .. }) {
                reached = true;
                break;
            }
            for &y in &out[x] {
                if !visited[y] {
                    visited[y] = true;
                    queue.push_back(y);
                }
            }
        }
        if !reached {
            report.violations.push(Violation::new(
                "unreachable sink",
                format!("no sink or storage is reachable from source `{}`", n.id),
            ));
        }
    }
    report
}

/// Flows to replay through the network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowAssignment {
    /// Link key → hm³/day per step. Missing links carry nothing.
    pub link_flows: BTreeMap<String, Vec<f64>>,
    /// Storage id → volume (hm³) at the start of each step plus the final
    /// volume, `horizon + 1` entries. Optional; recomputed when missing.
    #[serde(default)]
    pub storage_levels: BTreeMap<String, Vec<f64>>,
    /// Demand node id → volume withdrawn per step, hm³/day.
    #[serde(default)]
    pub deliveries: BTreeMap<String, Vec<f64>>,
}

impl FlowAssignment {
    pub fn zeros(net: &NetworkModel) -> Self {
        FlowAssignment {
            link_flows: net.links.iter().map(|l| (l.key(), vec![0.0; net.horizon])).collect(),
            ..FlowAssignment::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimulationError {
    #[error("`{what}` has {got} entries; the network horizon needs {expected}")]
    HorizonMismatch {
        what: String,
        got: usize,
        expected: usize,
    },
    #[error("flows reference unknown {what} `{id}`")]
    UnknownElement { what: &'static str, id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowIssue {
    pub code: String,
    pub element: String,
    pub t: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Per non-storage node and step: arriving flow minus leaving flow,
    /// net of the node's own generation or withdrawal.
    pub residuals: BTreeMap<String, Vec<f64>>,
    /// Per storage: volume trajectory, `horizon + 1` entries.
    pub storage_trajectories: BTreeMap<String, Vec<f64>>,
    pub issues: Vec<FlowIssue>,
    pub max_abs_residual: f64,
    pub feasible: bool,
}

const SIM_TOL: f64 = 1e-9;

/// Replays `flows` and checks balance, storage bounds and link limits.
pub fn simulate(net: &NetworkModel, flows: &FlowAssignment) -> Result<SimulationReport, SimulationError> {
    let horizon = net.horizon;
    let links: BTreeMap<String, &Link> = net.links.iter().map(|l| (l.key(), l)).collect();
    let index = net.node_index();
    let check_len = |what: &str, got: usize, expected: usize| {
        if got == expected {
            Ok(())
        } else {
            Err(SimulationError::HorizonMismatch {
                what: what.to_owned(),
                got,
                expected,
            })
        }
    };
    for (k, f) in &flows.link_flows {
        if !links.contains_key(k) {
            return Err(SimulationError::UnknownElement { what: "link", id: k.clone() });
        }
        check_len(k, f.len(), horizon)?;
    }
    for (k, s) in &flows.storage_levels {
        match net.node(&NodeId(k.clone())) {
            Some(n) if n.is_storage() => check_len(k, s.len(), horizon + 1)?,
            _ => return Err(SimulationError::UnknownElement { what: "storage", id: k.clone() }),
        }
    }
    for (k, d) in &flows.deliveries {
        match net.node(&NodeId(k.clone())) {
            Some(Node { kind: NodeKind::Demand { .. }, .. }) => check_len(k, d.len(), horizon)?,
            _ => return Err(SimulationError::UnknownElement { what: "demand node", id: k.clone() }),
        }
    }

    let flow = |key: &str, t: usize| flows.link_flows.get(key).map_or(0.0, |f| f[t]);
    let mut inflow = vec![vec![0.0; horizon]; net.nodes.len()];
    let mut outflow = vec![vec![0.0; horizon]; net.nodes.len()];
    let mut issues = Vec::new();
    for (key, l) in &links {
        let (Some(&a), Some(&b)) = (index.get(&l.from), index.get(&l.to)) else {
            continue;
        };
        for t in 0..horizon {
            let f = flow(key, t);
            outflow[a][t] += f;
            inflow[b][t] += f * l.delivery();
            if f < -SIM_TOL {
                issues.push(FlowIssue { code: "negative flow".into(), element: key.clone(), t, amount: f });
            }
            let cap = l.capacity_at(t);
            if f > cap + SIM_TOL * (1.0 + cap) {
                issues.push(FlowIssue { code: "capacity".into(), element: key.clone(), t, amount: f - cap });
            }
            let eco = l.ecological_min_at(t);
            if f < eco - SIM_TOL * (1.0 + eco) {
                issues.push(FlowIssue { code: "ecological minimum".into(), element: key.clone(), t, amount: eco - f });
            }
        }
    }

    let mut residuals = BTreeMap::new();
    let mut storage_trajectories = BTreeMap::new();
    let mut max_abs_residual: f64 = 0.0;
    for (i, n) in net.nodes.iter().enumerate() {
        let id = n.id.0.clone();
        match &n.kind {
            NodeKind::Sink => {}
            NodeKind::Storage {
                min_volume,
                max_volume,
                initial_volume,
                max_release,
                ..
            } => {
                let mut traj = Vec::with_capacity(horizon + 1);
                traj.push(*initial_volume);
                for t in 0..horizon {
                    let next = traj[t] + inflow[i][t] - outflow[i][t];
                    traj.push(next);
                }
                let tol = SIM_TOL * (1.0 + max_volume.abs());
                for (t, &s) in traj.iter().enumerate() {
                    if s < min_volume - tol {
                        issues.push(FlowIssue { code: "storage below minimum".into(), element: id.clone(), t, amount: min_volume - s });
                    }
                    if s > max_volume + tol {
                        issues.push(FlowIssue { code: "storage above maximum".into(), element: id.clone(), t, amount: s - max_volume });
                    }
                }
                if let Some(given) = flows.storage_levels.get(&id) {
                    for (t, (&g, &s)) in given.iter().zip(&traj).enumerate() {
                        if (g - s).abs() > tol * (1.0 + t as f64) {
                            issues.push(FlowIssue { code: "storage mismatch".into(), element: id.clone(), t, amount: g - s });
                        }
                    }
                }
                if let Some(cap) = max_release {
                    let released: f64 = outflow[i].iter().sum();
                    if released > cap + SIM_TOL * (1.0 + cap) {
                        issues.push(FlowIssue { code: "release cap".into(), element: id.clone(), t: horizon, amount: released - cap });
                    }
                }
                storage_trajectories.insert(id, traj);
            }
            kind => {
                let withdrawn = flows.deliveries.get(&id);
                let mut res = Vec::with_capacity(horizon);
                for t in 0..horizon {
                    let (inf, out) = (inflow[i][t], outflow[i][t]);
                    let throughput = inf + out;
                    let r = match kind {
                        NodeKind::Source { availability, .. } => {
                            let generated = out - inf;
                            let avail = availability.as_ref().map_or(f64::INFINITY, |a| a.at(t));
                            let tol = SIM_TOL * (1.0 + throughput);
                            if generated > avail + tol {
                                issues.push(FlowIssue { code: "availability".into(), element: id.clone(), t, amount: generated - avail });
                            }
                            // Sources may only add water.
                            generated.min(0.0)
                        }
                        NodeKind::Demand { .. } => inf - out - withdrawn.map_or(0.0, |w| w[t]),
                        _ => inf - out,
                    };
                    if r.abs() > SIM_TOL * (1.0 + throughput) {
                        issues.push(FlowIssue { code: "mass balance".into(), element: id.clone(), t, amount: r });
                    }
                    max_abs_residual = max_abs_residual.max(r.abs());
                    res.push(r);
                }
                residuals.insert(id, res);
            }
        }
    }
    let feasible = issues.is_empty();
    Ok(SimulationReport {
        residuals,
        storage_trajectories,
        issues,
        max_abs_residual,
        feasible,
    })
}

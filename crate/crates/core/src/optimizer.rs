use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use basin_lp::{
    pwl_convex, solve_lp_with, solve_milp_with, LpError, LpOptions, LpProblem, LpSolution, Relation,
    SolveControl, Status,
};
use serde::{Deserialize, Serialize};

use crate::demand::{demand_bands, DemandKind};
use crate::impact::{impact_report, ImpactError, ImpactReport, SupplyTensor};
use crate::network::{simulate, FlowAssignment, NodeKind};
use crate::quality::allowed_sources;
use crate::scenario::{CheckReport, CostWeights, Normalizers, Scenario};
use crate::series::DateRange;
use crate::source::SourceKind;
use crate::units::M3_PER_HM3;

/// Objective perturbation per preference rank among equal-cost sources.
pub const TIE_BREAK: f64 = 1e-9;
/// Small cost per unit of link flow; discourages idle circulation.
pub const FLOW_COST: f64 = 1e-10;
/// Slack granted to each fixed stage of the lexicographic mode.
pub const LEXICOGRAPHIC_TOL: f64 = 1e-6;

/// Constraint groups, in the order tried when explaining infeasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Wetland,
    EcologicalMinimum,
    StorageBounds,
    ExtractionCap,
    WaterRights,
    Availability,
    LinkCapacity,
}

impl Family {
    pub const ORDER: [Family; 7] = [
        Family::Wetland,
        Family::EcologicalMinimum,
        Family::StorageBounds,
        Family::ExtractionCap,
        Family::WaterRights,
        Family::Availability,
        Family::LinkCapacity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Wetland => "wetland",
            Family::EcologicalMinimum => "ecological_minimum",
            Family::StorageBounds => "storage_bounds",
            Family::ExtractionCap => "extraction_cap",
            Family::WaterRights => "water_rights",
            Family::Availability => "availability",
            Family::LinkCapacity => "link_capacity",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("scenario failed validation with {} error(s)", .0.errors.len())]
    Invalid(Box<CheckReport>),
    #[error("scenario is infeasible{}", match .family { Some(f) => format!("; relaxing `{f}` restores feasibility"), None => String::new() })]
    Infeasible { family: Option<Family> },
    #[error("objective is unbounded; the model is mis-specified")]
    Unbounded,
    #[error("solve cancelled")]
    Cancelled,
    #[error("solver: {0}")]
    Solver(String),
    #[error(transparent)]
    Impact(#[from] ImpactError),
}

impl From<LpError> for OptimizeError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Cancelled => OptimizeError::Cancelled,
            other => OptimizeError::Solver(other.to_string()),
        }
    }
}

/// Per-run overrides of scenario settings.
#[derive(Debug, Clone, Default)]
pub struct OptimizeOptions {
    pub weights: Option<CostWeights>,
    pub horizon_days: Option<usize>,
    pub segments: Option<usize>,
    pub lexicographic: Option<bool>,
    pub solver: LpOptions,
    pub control: Option<SolveControl>,
    /// Store wall-clock solve time in the plan (makes plans differ run to run).
    pub record_runtime: bool,
}

/// Settings a plan was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    pub weights: CostWeights,
    pub normalizers: Normalizers,
    pub horizon_days: usize,
    pub segments: usize,
    pub lexicographic: bool,
    pub binary_rules: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl From<Status> for SolverStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Optimal => SolverStatus::Optimal,
            Status::Infeasible => SolverStatus::Infeasible,
            Status::Unbounded => SolverStatus::Unbounded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub status: SolverStatus,
    pub iterations: usize,
    pub nodes: usize,
    pub stages: usize,
    pub objective: f64,
    pub dual_gap: f64,
    pub primal_residual: f64,
    pub variables: usize,
    pub constraints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

/// The weighted objective split into its three terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `w_deficit` × Σ chord approximation of the squared fractional deficits.
    pub deficit: f64,
    /// `-w_economic` × net economic value / economic normaliser.
    pub economic: f64,
    /// `w_co2` × total emissions / emissions normaliser.
    pub co2: f64,
    pub total: f64,
    /// `w_deficit` × Σ exact squared fractional deficits, for comparison.
    pub deficit_exact_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitInfo {
    pub id: String,
    pub kind: DemandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBand {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindDeficit {
    pub units: Vec<String>,
    /// Σ over member units of deficit, hm³ per day.
    pub total: Vec<f64>,
    /// Mean over member units with positive demand of deficit/demand × 100.
    pub average_percent: Vec<Option<f64>>,
    pub demand: Vec<f64>,
    pub horizon_deficit: f64,
    pub horizon_demand: f64,
    /// Mean of the defined daily average percentages.
    pub horizon_average_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitAggregate {
    pub by_kind: BTreeMap<DemandKind, KindDeficit>,
    pub total_demand: f64,
    pub total_supply: f64,
    pub total_deficit: f64,
    /// total deficit / total demand.
    pub deficit_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub feasible: bool,
    pub max_abs_residual: f64,
    pub issues: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_issue: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub scenario_digest: String,
    pub scenario_name: String,
    pub run: RunParameters,
    pub solver: SolverMeta,
    pub horizon: DateRange,
    pub units: Vec<UnitInfo>,
    /// Unit → demand, hm³ per day.
    pub demand: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demand_bands: BTreeMap<String, DemandBand>,
    pub supply: SupplyTensor,
    /// Unit → unmet demand, hm³ per day.
    pub deficit_by_unit: BTreeMap<String, Vec<f64>>,
    pub flows: FlowAssignment,
    pub kpis: ImpactReport,
    pub objective_breakdown: ObjectiveBreakdown,
    pub aggregates: DeficitAggregate,
    pub audit: AuditSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AllocationPlan {
    pub fn unit_kind(&self, id: &str) -> Option<DemandKind> {
        self.units.iter().find(|u| u.id == id).map(|u| u.kind)
    }

    /// Σ over source kinds of the supply to `unit` on each day.
    pub fn total_supply(&self, unit: &str) -> Vec<f64> {
        let days = self.horizon.days;
        let mut out = vec![0.0; days];
        if let Some(by_kind) = self.supply.get(unit) {
            for s in by_kind.values() {
                for (o, v) in out.iter_mut().zip(s) {
                    *o += v;
                }
            }
        }
        out
    }
}

/// Normalisers when the scenario declares none: total horizon demand (m³)
/// times the largest unit cost and the largest source emission factor.
pub fn default_normalizers(s: &Scenario, total_demand_hm3: f64) -> Normalizers {
    let volume = total_demand_hm3 * M3_PER_HM3;
    let present: BTreeSet<SourceKind> = s
        .network
        .nodes
        .iter()
        .filter_map(|n| match n.kind {
            NodeKind::Source { source_kind, .. } => Some(source_kind),
            _ => None,
        })
        .collect();
    let specs: Vec<_> = s
        .sources
        .iter()
        .filter(|sp| present.is_empty() || present.contains(&sp.kind))
        .collect();
    let max_cost = specs.iter().map(|sp| sp.cost_per_m3).fold(0.0, f64::max);
    let max_co2 = specs
        .iter()
        .map(|sp| sp.co2_factor(s.grid_emission_factor))
        .fold(0.0, f64::max);
    let positive = |v: f64| if v > 0.0 && v.is_finite() { v } else { 1.0 };
    Normalizers {
        economic_eur: positive(volume * max_cost),
        co2_kg: positive(volume * max_co2),
    }
}

/// Objective pieces kept apart so stages can recombine them.
#[derive(Debug, Clone, Default)]
struct Terms {
    deficit: Vec<f64>,
    economic: Vec<f64>,
    co2: Vec<f64>,
    tie: Vec<f64>,
}

impl Terms {
    fn push(&mut self, deficit: f64, economic: f64, co2: f64, tie: f64) {
        self.deficit.push(deficit);
        self.economic.push(economic);
        self.co2.push(co2);
        self.tie.push(tie);
    }

    fn weighted(&self, w: &CostWeights) -> Vec<f64> {
        (0..self.tie.len())
            .map(|j| w.deficit * self.deficit[j] + w.economic * self.economic[j] + w.co2 * self.co2[j] + self.tie[j])
            .collect()
    }
}

/// An assembled problem plus the maps needed to read a solution back.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub problem: LpProblem,
    pub weights: CostWeights,
    pub normalizers: Normalizers,
    pub segments: usize,
    terms: Terms,
    /// (unit, kind, day, var)
    supply_vars: Vec<(usize, SourceKind, usize, usize)>,
    /// (link, day, var) over every kind the link carries.
    flow_vars: Vec<(usize, usize, usize)>,
    /// (storage node, day, var); level at the end of `day`.
    storage_vars: Vec<(usize, usize, usize)>,
    /// (unit, day, segment vars)
    deficit_vars: Vec<(usize, usize, Vec<usize>)>,
    demand: Vec<Vec<f64>>,
}

impl BuiltModel {
    fn add_var(&mut self, name: String, lo: f64, hi: f64, terms: (f64, f64, f64, f64)) -> usize {
        self.terms.push(terms.0, terms.1, terms.2, terms.3);
        self.problem.add_var(name, lo, hi, 0.0)
    }
}

#[derive(Debug, Clone, Default)]
struct BuildOptions {
    relax: BTreeSet<Family>,
}

struct Context<'a> {
    s: &'a Scenario,
    weights: CostWeights,
    segments: usize,
    binary_rules: bool,
}

fn build(ctx: &Context<'_>, opts: &BuildOptions) -> Result<BuiltModel, OptimizeError> {
    let s = ctx.s;
    let net = &s.network;
    let days = s.horizon.days;
    let relax = |f: Family| opts.relax.contains(&f);
    let index = net.node_index();
    let kinds_at = net.kinds_at_nodes();
    let unit_pos: BTreeMap<&str, usize> = s.units.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let demand: Vec<Vec<f64>> = s
        .units
        .iter()
        .map(|u| crate::demand::expand_demand(u, &s.horizon))
        .collect::<Result<_, _>>()
        .map_err(|e| OptimizeError::Solver(e.to_string()))?;
    let total_demand: f64 = demand.iter().flatten().sum();
    let normalizers = s.normalizers.unwrap_or_else(|| default_normalizers(s, total_demand));
    let allowed: Vec<BTreeSet<SourceKind>> = s
        .units
        .iter()
        .map(|u| allowed_sources(u, &s.quality).unwrap_or_default())
        .collect();
    let grid = s.grid_emission_factor;

    let chord = pwl_convex(|x: f64| x * x, 0.0, 1.0, ctx.segments)
        .map_err(|e| OptimizeError::Solver(e.to_string()))?;
    let deficit_slopes = chord.slopes();
    let width = 1.0 / ctx.segments as f64;

    let mut m = BuiltModel {
        problem: LpProblem::new(),
        weights: ctx.weights,
        normalizers,
        segments: ctx.segments,
        terms: Terms::default(),
        supply_vars: Vec::new(),
        flow_vars: Vec::new(),
        storage_vars: Vec::new(),
        deficit_vars: Vec::new(),
        demand: demand.clone(),
    };

    // Per-kind flow variable of every (link, day), and their totals.
    let mut link_kind_var: Vec<Vec<BTreeMap<SourceKind, usize>>> = vec![Vec::with_capacity(days); net.links.len()];
    let mut gen_var: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut storage_var: BTreeMap<(usize, SourceKind, usize), usize> = BTreeMap::new();
    let mut supply_var: BTreeMap<(usize, SourceKind, usize), usize> = BTreeMap::new();
    let mut rights_rows: BTreeMap<SourceKind, Vec<(usize, f64)>> = BTreeMap::new();
    let mut release_rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut unit_supply_all: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s.units.len()];

    let link_ends: Vec<Option<(usize, usize)>> = net
        .links
        .iter()
        .map(|l| Some((*index.get(&l.from)?, *index.get(&l.to)?)))
        .collect();

    for t in 0..days {
        // Link flows.
        for (li, l) in net.links.iter().enumerate() {
            let Some((a, _)) = link_ends[li] else {
                link_kind_var[li].push(BTreeMap::new());
                continue;
            };
            let kinds = &kinds_at[a];
            let cap = if relax(Family::LinkCapacity) { f64::INFINITY } else { l.capacity_at(t) };
            let eco = if relax(Family::EcologicalMinimum) { 0.0 } else { l.ecological_min_at(t) };
            let single = kinds.len() == 1 && !(ctx.binary_rules && l.min_when_active.is_some());
            let mut vars = BTreeMap::new();
            for &k in kinds {
                let (lo, hi) = if single { (eco, cap) } else { (0.0, f64::INFINITY) };
                let v = m.add_var(format!("f[{}|{k}|{t}]", l.key()), lo, hi, (0.0, 0.0, 0.0, FLOW_COST));
                vars.insert(k, v);
                m.flow_vars.push((li, t, v));
            }
            if !single && !vars.is_empty() {
                let row: Vec<(usize, f64)> = vars.values().map(|&v| (v, 1.0)).collect();
                if cap.is_finite() && !(ctx.binary_rules && l.min_when_active.is_some()) {
                    m.problem.add_constraint(format!("cap[{}|{t}]", l.key()), row.clone(), Relation::Le, cap);
                }
                if eco > 0.0 {
                    m.problem.add_constraint(format!("eco[{}|{t}]", l.key()), row.clone(), Relation::Ge, eco);
                }
            }
            if ctx.binary_rules && !vars.is_empty() {
                if let Some(min_on) = l.min_when_active {
                    let y = m.problem.add_binary(format!("on[{}|{t}]", l.key()), 0.0);
                    m.terms.push(0.0, 0.0, 0.0, 0.0);
                    let mut upper: Vec<(usize, f64)> = vars.values().map(|&v| (v, 1.0)).collect();
                    let cap_here = if cap.is_finite() { cap } else { l.capacity_at(t) };
                    upper.push((y, -cap_here));
                    m.problem.add_constraint(format!("on_cap[{}|{t}]", l.key()), upper, Relation::Le, 0.0);
                    let mut lower: Vec<(usize, f64)> = vars.values().map(|&v| (v, 1.0)).collect();
                    lower.push((y, -min_on));
                    m.problem.add_constraint(format!("on_min[{}|{t}]", l.key()), lower, Relation::Ge, 0.0);
                }
            }
            link_kind_var[li].push(vars);
        }

        // Node variables: generation, storage levels, supplies.
        for (ni, n) in net.nodes.iter().enumerate() {
            match &n.kind {
                NodeKind::Source {
                    source_kind,
                    availability,
                } => {
                    let hi = match availability {
                        Some(a) if !relax(Family::Availability) => a.at(t),
                        _ => f64::INFINITY,
                    };
                    let v = m.add_var(format!("g[{}|{t}]", n.id), 0.0, hi, (0.0, 0.0, 0.0, 0.0));
                    gen_var.insert((ni, t), v);
                    rights_rows.entry(*source_kind).or_default().push((v, 1.0));
                }
                NodeKind::Storage {
                    min_volume,
                    max_volume,
                    ..
                } => {
                    let kinds = &kinds_at[ni];
                    let single = kinds.len() == 1;
                    let (lo, hi) = if relax(Family::StorageBounds) {
                        (0.0, f64::INFINITY)
                    } else {
                        (*min_volume, *max_volume)
                    };
                    let mut row = Vec::new();
                    for &k in kinds {
                        let (vlo, vhi) = if single { (lo, hi) } else { (0.0, f64::INFINITY) };
                        let v = m.add_var(format!("s[{}|{k}|{t}]", n.id), vlo, vhi, (0.0, 0.0, 0.0, 0.0));
                        storage_var.insert((ni, k, t), v);
                        m.storage_vars.push((ni, t, v));
                        row.push((v, 1.0));
                    }
                    if !single && !row.is_empty() {
                        if lo > 0.0 {
                            m.problem.add_constraint(format!("smin[{}|{t}]", n.id), row.clone(), Relation::Ge, lo);
                        }
                        if hi.is_finite() {
                            m.problem.add_constraint(format!("smax[{}|{t}]", n.id), row, Relation::Le, hi);
                        }
                    }
                }
                NodeKind::Demand { unit } => {
                    let Some(&ui) = unit_pos.get(unit.as_str()) else { continue };
                    let u = &s.units[ui];
                    let d = demand[ui][t];
                    for &k in &kinds_at[ni] {
                        let spec = s.spec(k);
                        let cost = spec.map_or(0.0, |sp| sp.cost_per_m3);
                        let co2f = spec.map_or(0.0, |sp| sp.co2_factor(grid));
                        let linear_benefit = match u.benefit {
                            crate::impact::Benefit::Linear { eur_per_m3 } => eur_per_m3,
                            _ => 0.0,
                        };
                        let econ = M3_PER_HM3 * (cost - linear_benefit) / normalizers.economic_eur;
                        let co2 = M3_PER_HM3 * (co2f + u.emission_factor) / normalizers.co2_kg;
                        let tie = TIE_BREAK * k.preference_rank() as f64;
                        let hi = if d > 0.0 && allowed[ui].contains(&k) { d } else { 0.0 };
                        let v = m.add_var(format!("S[{}|{k}|{t}]", u.id), 0.0, hi, (0.0, econ, co2, tie));
                        supply_var.insert((ui, k, t), v);
                        m.supply_vars.push((ui, k, t, v));
                        unit_supply_all[ui].push((v, 1.0));
                    }
                }
                NodeKind::Junction | NodeKind::Sink => {}
            }
        }

        // Balance of each kind at each node.
        for (ni, n) in net.nodes.iter().enumerate() {
            if matches!(n.kind, NodeKind::Sink) {
                continue;
            }
            for &k in &kinds_at[ni] {
                let mut row: Vec<(usize, f64)> = Vec::new();
                let mut rhs = 0.0;
                for (li, l) in net.links.iter().enumerate() {
                    let Some((a, b)) = link_ends[li] else { continue };
                    if let Some(&v) = link_kind_var[li][t].get(&k) {
                        if b == ni {
                            row.push((v, l.delivery()));
                        }
                        if a == ni {
                            row.push((v, -1.0));
                        }
                    }
                }
                match &n.kind {
                    NodeKind::Source { source_kind, .. } if *source_kind == k => {
                        row.push((gen_var[&(ni, t)], 1.0));
                    }
                    NodeKind::Storage { initial_volume, .. } => {
                        // in − out − (s_t − s_{t−1}) = 0
                        row.push((storage_var[&(ni, k, t)], -1.0));
                        if t > 0 {
                            row.push((storage_var[&(ni, k, t - 1)], 1.0));
                        } else if net.initial_kind(ni, &kinds_at) == k {
                            rhs = -initial_volume;
                        }
                    }
                    NodeKind::Demand { unit } => {
                        if let Some(&ui) = unit_pos.get(unit.as_str()) {
                            if let Some(&v) = supply_var.get(&(ui, k, t)) {
                                row.push((v, -1.0));
                            }
                        }
                    }
                    _ => {}
                }
                if !row.is_empty() || rhs != 0.0 {
                    m.problem.add_constraint(format!("bal[{}|{k}|{t}]", n.id), row, Relation::Eq, rhs);
                }
            }
        }

        // Demand satisfaction: Σ S + D·x = D with x the fractional deficit.
        for (ui, u) in s.units.iter().enumerate() {
            let d = demand[ui][t];
            if d <= 0.0 {
                continue;
            }
            let mut row: Vec<(usize, f64)> = SourceKind::ALL
                .iter()
                .filter_map(|&k| supply_var.get(&(ui, k, t)).map(|&v| (v, 1.0)))
                .collect();
            if u.kind.is_wetland() {
                let rel = if relax(Family::Wetland) { Relation::Le } else { Relation::Eq };
                m.problem.add_constraint(format!("wetland[{}|{t}]", u.id), row, rel, d);
                continue;
            }
            let mut segs = Vec::with_capacity(ctx.segments);
            for (j, &slope) in deficit_slopes.iter().enumerate() {
                let v = m.add_var(format!("x[{}|{t}|{j}]", u.id), 0.0, width, (slope, 0.0, 0.0, 0.0));
                row.push((v, d));
                segs.push(v);
            }
            m.problem.add_constraint(format!("dem[{}|{t}]", u.id), row, Relation::Eq, d);
            m.deficit_vars.push((ui, t, segs));
        }

        // Basin-wide daily availability per kind.
        if !relax(Family::Availability) {
            for spec in &s.sources {
                let Some(a) = &spec.availability else { continue };
                let row: Vec<(usize, f64)> = net
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| matches!(n.kind, NodeKind::Source { source_kind, .. } if source_kind == spec.kind))
                    .map(|(ni, _)| (gen_var[&(ni, t)], 1.0))
                    .collect();
                if !row.is_empty() {
                    m.problem.add_constraint(format!("avail[{}|{t}]", spec.kind), row, Relation::Le, a.at(t));
                }
            }
        }

        for (li, ends) in link_ends.iter().enumerate() {
            let Some((a, _)) = *ends else { continue };
            if matches!(net.nodes[a].kind, NodeKind::Storage { max_release: Some(_), .. }) {
                let entry = release_rows.entry(a).or_default();
                entry.extend(link_kind_var[li][t].values().map(|&v| (v, 1.0)));
            }
        }
    }

    if !relax(Family::WaterRights) {
        for spec in &s.sources {
            if let (Some(cap), Some(row)) = (spec.rights_cap, rights_rows.get(&spec.kind)) {
                m.problem.add_constraint(format!("rights[{}]", spec.kind), row.clone(), Relation::Le, cap);
            }
        }
    }
    if !relax(Family::ExtractionCap) {
        for (ni, row) in release_rows {
            if let NodeKind::Storage { max_release: Some(cap), .. } = net.nodes[ni].kind {
                m.problem.add_constraint(format!("release[{}]", net.nodes[ni].id), row, Relation::Le, cap);
            }
        }
    }

    // Concave benefit curves over each unit's horizon total.
    for (ui, u) in s.units.iter().enumerate() {
        let Some(curve) = u.benefit.curve() else { continue };
        let curve = curve.map_err(|e| OptimizeError::Solver(e.to_string()))?;
        let mut row: Vec<(usize, f64)> = unit_supply_all[ui].iter().map(|&(v, _)| (v, -1.0)).collect();
        let pts = curve.breakpoints().to_vec();
        for (j, slope) in curve.slopes().into_iter().enumerate() {
            let w = pts[j + 1].0 - pts[j].0;
            let v = m.add_var(
                format!("b[{}|{j}]", u.id),
                0.0,
                w,
                (0.0, -slope / normalizers.economic_eur, 0.0, 0.0),
            );
            row.push((v, 1.0));
        }
        m.problem.add_constraint(format!("benefit[{}]", u.id), row, Relation::Le, 0.0);
    }

    m.problem.objective = m.terms.weighted(&ctx.weights);
    Ok(m)
}

fn run_solver(
    problem: &LpProblem,
    opts: &OptimizeOptions,
) -> Result<LpSolution, OptimizeError> {
    let control = opts.control.as_ref();
    let sol = if problem.has_binaries() {
        solve_milp_with(problem, &opts.solver, control)?
    } else {
        solve_lp_with(problem, &opts.solver, control)?
    };
    Ok(sol)
}

fn effective(s: &Scenario, opts: &OptimizeOptions) -> Scenario {
    let mut e = match opts.horizon_days {
        Some(d) if d < s.horizon.days => s.with_horizon_days(d),
        _ => s.clone(),
    };
    if let Some(w) = opts.weights {
        e.weights = w;
    }
    if let Some(k) = opts.segments {
        e.rules.pwl_segments = k;
    }
    if let Some(l) = opts.lexicographic {
        e.rules.lexicographic = l;
    }
    e
}

/// Assembles the scenario's LP without solving it.
pub fn build_problem(s: &Scenario, opts: &OptimizeOptions) -> Result<BuiltModel, OptimizeError> {
    let e = effective(s, opts);
    let report = e.validate();
    if !report.errors.is_empty() {
        return Err(OptimizeError::Invalid(Box::new(report)));
    }
    let ctx = Context {
        s: &e,
        weights: e.weights,
        segments: e.rules.pwl_segments,
        binary_rules: e.rules.binary_rules,
    };
    build(&ctx, &BuildOptions::default())
}

fn diagnose(ctx: &Context<'_>, opts: &OptimizeOptions) -> Result<Option<Family>, OptimizeError> {
    for fam in Family::ORDER {
        let relaxed = build(
            ctx,
            &BuildOptions {
                relax: [fam].into_iter().collect(),
            },
        )?;
        let sol = run_solver(&relaxed.problem, opts)?;
        if sol.status != Status::Infeasible {
            return Ok(Some(fam));
        }
    }
    Ok(None)
}

fn check_status(sol: &LpSolution, ctx: &Context<'_>, opts: &OptimizeOptions) -> Result<(), OptimizeError> {
    match sol.status {
        Status::Optimal => Ok(()),
        Status::Unbounded => Err(OptimizeError::Unbounded),
        Status::Infeasible => Err(OptimizeError::Infeasible {
            family: diagnose(ctx, opts)?,
        }),
    }
}

/// Solves the weighted model (or the lexicographic sequence when enabled)
/// and returns an audited plan.
pub fn optimize(s: &Scenario, opts: &OptimizeOptions) -> Result<AllocationPlan, OptimizeError> {
    let e = effective(s, opts);
    solve_scenario(s, &e, opts, e.rules.lexicographic)
}

/// Strict priority mode: minimise each rank's deficit in turn, fixing each
/// optimum within [`LEXICOGRAPHIC_TOL`], then apply the weighted objective
/// to what freedom remains.
pub fn lexicographic_refine(s: &Scenario, opts: &OptimizeOptions) -> Result<AllocationPlan, OptimizeError> {
    let e = effective(s, opts);
    solve_scenario(s, &e, opts, true)
}

fn solve_scenario(
    original: &Scenario,
    e: &Scenario,
    opts: &OptimizeOptions,
    lexicographic: bool,
) -> Result<AllocationPlan, OptimizeError> {
    let started = Instant::now();
    let report = e.validate();
    if !report.errors.is_empty() {
        return Err(OptimizeError::Invalid(Box::new(report)));
    }
    let ctx = Context {
        s: e,
        weights: e.weights,
        segments: e.rules.pwl_segments,
        binary_rules: e.rules.binary_rules,
    };
    let mut model = build(&ctx, &BuildOptions::default())?;
    let mut iterations = 0;
    let mut nodes = 0;
    let mut stages = 0;
    if lexicographic {
        let mut ranks: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (pos, (ui, _, _)) in model.deficit_vars.iter().enumerate() {
            if let Some(r) = e.units[*ui].priority() {
                ranks.entry(r).or_default().push(pos);
            }
        }
        for (rank, members) in ranks {
            let mut objective = vec![0.0; model.problem.num_vars()];
            let mut row = Vec::new();
            for &pos in &members {
                for &v in &model.deficit_vars[pos].2 {
                    objective[v] = model.terms.deficit[v];
                    row.push((v, model.terms.deficit[v]));
                }
            }
            let mut stage = model.problem.clone();
            stage.objective = objective;
            let sol = run_solver(&stage, opts)?;
            iterations += sol.iterations;
            nodes += sol.nodes;
            stages += 1;
            check_status(&sol, &ctx, opts)?;
            model.problem.add_constraint(
                format!("stage[{rank}]"),
                row,
                Relation::Le,
                sol.objective_value + LEXICOGRAPHIC_TOL,
            );
        }
    }
    let sol = run_solver(&model.problem, opts)?;
    iterations += sol.iterations;
    nodes += sol.nodes;
    stages += 1;
    check_status(&sol, &ctx, opts)?;

    let runtime = started.elapsed().as_secs_f64() * 1e3;
    let meta = SolverMeta {
        status: sol.status.into(),
        iterations,
        nodes,
        stages,
        objective: sol.objective_value,
        dual_gap: sol.dual_gap,
        primal_residual: sol.primal_residual,
        variables: model.problem.num_vars(),
        constraints: model.problem.num_constraints(),
        runtime_ms: opts.record_runtime.then_some(runtime),
    };
    let run = RunParameters {
        weights: e.weights,
        normalizers: model.normalizers,
        horizon_days: e.horizon.days,
        segments: model.segments,
        lexicographic,
        binary_rules: e.rules.binary_rules,
    };
    assemble_plan(original, e, &model, &sol.values, meta, run, report.warnings)
}

fn assemble_plan(
    original: &Scenario,
    e: &Scenario,
    model: &BuiltModel,
    x: &[f64],
    solver: SolverMeta,
    run: RunParameters,
    mut warnings: Vec<String>,
) -> Result<AllocationPlan, OptimizeError> {
    let days = e.horizon.days;
    let net = &e.network;
    let nodes_of = e.unit_nodes();

    let mut supply: SupplyTensor = BTreeMap::new();
    for u in &e.units {
        supply.insert(u.id.clone(), BTreeMap::new());
    }
    for &(ui, k, t, v) in &model.supply_vars {
        supply
            .get_mut(&e.units[ui].id)
            .expect("unit registered")
            .entry(k)
            .or_insert_with(|| vec![0.0; days])[t] = x[v];
    }

    let mut deficit_by_unit: BTreeMap<String, Vec<f64>> =
        e.units.iter().map(|u| (u.id.clone(), vec![0.0; days])).collect();
    let mut deficit_term = 0.0;
    let mut deficit_square = 0.0;
    for (ui, t, segs) in &model.deficit_vars {
        let frac: f64 = segs.iter().map(|&v| x[v]).sum();
        let chord: f64 = segs.iter().map(|&v| model.terms.deficit[v] * x[v]).sum();
        deficit_term += chord;
        deficit_square += frac * frac;
        deficit_by_unit.get_mut(&e.units[*ui].id).expect("unit registered")[*t] = model.demand[*ui][*t] * frac;
    }

    let mut link_flows: BTreeMap<String, Vec<f64>> =
        net.links.iter().map(|l| (l.key(), vec![0.0; days])).collect();
    for &(li, t, v) in &model.flow_vars {
        link_flows.get_mut(&net.links[li].key()).expect("link registered")[t] += x[v];
    }
    let mut storage_levels = BTreeMap::new();
    for (ni, n) in net.nodes.iter().enumerate() {
        if let NodeKind::Storage { initial_volume, .. } = n.kind {
            let mut levels = vec![0.0; days + 1];
            levels[0] = initial_volume;
            for &(sn, t, v) in &model.storage_vars {
                if sn == ni {
                    levels[t + 1] += x[v];
                }
            }
            storage_levels.insert(n.id.0.clone(), levels);
        }
    }
    let mut deliveries = BTreeMap::new();
    for u in &e.units {
        if let Some(node) = nodes_of.get(u.id.as_str()) {
            let mut total = vec![0.0; days];
            for s in supply[&u.id].values() {
                for (o, v) in total.iter_mut().zip(s) {
                    *o += v;
                }
            }
            deliveries.insert((*node).to_owned(), total);
        }
    }
    let flows = FlowAssignment {
        link_flows,
        storage_levels,
        deliveries,
    };

    let audit = match simulate(net, &flows) {
        Ok(rep) => AuditSummary {
            feasible: rep.feasible,
            max_abs_residual: rep.max_abs_residual,
            issues: rep.issues.len(),
            first_issue: rep
                .issues
                .first()
                .map(|i| format!("{} at `{}` day {}: {:e}", i.code, i.element, i.t, i.amount)),
        },
        Err(err) => AuditSummary {
            feasible: false,
            max_abs_residual: f64::INFINITY,
            issues: 1,
            first_issue: Some(err.to_string()),
        },
    };
    if !audit.feasible {
        warnings.push(format!(
            "network audit failed: {}",
            audit.first_issue.clone().unwrap_or_default()
        ));
    }

    let kpis = impact_report(&supply, &e.sources, &e.units, e.grid_emission_factor)?;
    warnings.extend(kpis.warnings.iter().cloned());
    let w = &run.weights;
    let deficit = w.deficit * deficit_term;
    let economic = -w.economic * kpis.net_economic / model.normalizers.economic_eur;
    let co2 = w.co2 * kpis.co2_total * 1e3 / model.normalizers.co2_kg;
    let objective_breakdown = ObjectiveBreakdown {
        deficit,
        economic,
        co2,
        total: deficit + economic + co2,
        deficit_exact_square: w.deficit * deficit_square,
    };

    let units: Vec<UnitInfo> = e
        .units
        .iter()
        .map(|u| UnitInfo {
            id: u.id.clone(),
            kind: u.kind,
            priority: u.priority(),
            node: nodes_of.get(u.id.as_str()).map(|s| (*s).to_owned()).unwrap_or_default(),
        })
        .collect();
    let demand: BTreeMap<String, Vec<f64>> = e
        .units
        .iter()
        .zip(&model.demand)
        .map(|(u, d)| (u.id.clone(), d.clone()))
        .collect();
    let mut bands = BTreeMap::new();
    for u in &e.units {
        if let Ok(Some((lower, upper))) = demand_bands(u, &e.horizon) {
            bands.insert(u.id.clone(), DemandBand { lower, upper });
        }
    }
    let supplied: f64 = supply.values().flat_map(|m| m.values()).flatten().sum();
    let aggregates = aggregate(&units, &demand, &deficit_by_unit, supplied);

    Ok(AllocationPlan {
        scenario_digest: original.digest(),
        scenario_name: original.name.clone(),
        run,
        solver,
        horizon: e.horizon,
        units,
        demand,
        demand_bands: bands,
        supply,
        deficit_by_unit,
        flows,
        kpis,
        objective_breakdown,
        aggregates,
        audit,
        warnings,
    })
}

fn aggregate(
    units: &[UnitInfo],
    demand: &BTreeMap<String, Vec<f64>>,
    deficit: &BTreeMap<String, Vec<f64>>,
    total_supply: f64,
) -> DeficitAggregate {
    let days = demand.values().next().map_or(0, Vec::len);
    let mut by_kind: BTreeMap<DemandKind, KindDeficit> = BTreeMap::new();
    for u in units {
        let entry = by_kind.entry(u.kind).or_insert_with(|| KindDeficit {
            units: Vec::new(),
            total: vec![0.0; days],
            average_percent: vec![None; days],
            demand: vec![0.0; days],
            horizon_deficit: 0.0,
            horizon_demand: 0.0,
            horizon_average_percent: None,
        });
        entry.units.push(u.id.clone());
    }
    let zeros = vec![0.0; days];
    for agg in by_kind.values_mut() {
        for t in 0..days {
            let mut pct_sum = 0.0;
            let mut pct_n = 0usize;
            for id in &agg.units {
                let d = demand.get(id).unwrap_or(&zeros)[t];
                let x = deficit.get(id).unwrap_or(&zeros)[t];
                agg.total[t] += x;
                agg.demand[t] += d;
                if d > 0.0 {
                    pct_sum += x / d * 100.0;
                    pct_n += 1;
                }
            }
            agg.average_percent[t] = (pct_n > 0).then(|| pct_sum / pct_n as f64);
        }
        agg.horizon_deficit = agg.total.iter().sum();
        agg.horizon_demand = agg.demand.iter().sum();
        let defined: Vec<f64> = agg.average_percent.iter().flatten().copied().collect();
        agg.horizon_average_percent =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    }
    let total_demand: f64 = by_kind.values().map(|k| k.horizon_demand).sum();
    let total_deficit: f64 = by_kind.values().map(|k| k.horizon_deficit).sum();
    DeficitAggregate {
        by_kind,
        total_demand,
        total_supply,
        total_deficit,
        deficit_fraction: if total_demand > 0.0 { total_deficit / total_demand } else { 0.0 },
    }
}

/// Per-kind deficit totals and mean percentual deficits of `plan`.
pub fn aggregate_deficits(plan: &AllocationPlan) -> DeficitAggregate {
    let supplied: f64 = plan.supply.values().flat_map(|m| m.values()).flatten().sum();
    aggregate(&plan.units, &plan.demand, &plan.deficit_by_unit, supplied)
}

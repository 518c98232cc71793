//! Shared builders and independent checks for the integration tests. The
//! checks recompute everything from plan payloads and scenario data; none
//! of them reuse optimizer internals.
#![allow(dead_code)]

use std::collections::BTreeMap;

use basin_alloc::demand::{DemandKind, DemandProfile, DemandUnit};
use basin_alloc::impact::Benefit;
use basin_alloc::io::default_sources;
use basin_alloc::network::{simulate, Link, NetworkModel, Node};
use basin_alloc::optimizer::AllocationPlan;
use basin_alloc::quality::{allowed_sources, QualityMatrix};
use basin_alloc::scenario::{CostWeights, Normalizers, RuleFlags, Scenario, VolumeUnit, SCHEMA_VERSION};
use basin_alloc::series::{DateRange, Series};
use basin_alloc::source::SourceKind;
use basin_alloc::GridEmissionFactor;
use chrono::NaiveDate;
use rand::Rng;

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 6, 1).unwrap()
}

/// One demand unit of a bipartite test basin.
#[derive(Debug, Clone)]
pub struct UnitSpec {
    pub kind: DemandKind,
    pub demand: Vec<f64>,
    pub emission_factor: f64,
    pub benefit_eur_per_m3: f64,
}

impl UnitSpec {
    pub fn new(kind: DemandKind, demand: Vec<f64>) -> Self {
        UnitSpec {
            kind,
            demand,
            emission_factor: 0.0,
            benefit_eur_per_m3: 0.0,
        }
    }
}

/// Every source feeds every demand node directly; demand nodes drain to a
/// sea sink. Days are independent (no storage, no caps).
pub fn bipartite(
    units: &[UnitSpec],
    sources: &[(SourceKind, Vec<f64>)],
    weights: CostWeights,
    normalizers: Option<Normalizers>,
) -> Scenario {
    let days = units.first().map_or(1, |u| u.demand.len());
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for (k, (kind, avail)) in sources.iter().enumerate() {
        nodes.push(Node::source(&format!("src{k}"), *kind, Some(Series::Daily(avail.clone()))));
    }
    let mut demand_units = Vec::new();
    for (i, u) in units.iter().enumerate() {
        let id = format!("{}{:02}", u.kind, i + 1);
        let node = format!("dem{i}");
        nodes.push(Node::demand(&node, &id));
        for k in 0..sources.len() {
            links.push(Link::new(&format!("src{k}"), &node));
        }
        links.push(Link::new(&node, "sea"));
        let mut du = DemandUnit::new(
            id,
            u.kind,
            DemandProfile::ForecastSeries {
                start: None,
                series: Series::Daily(u.demand.clone()),
                lower: None,
                upper: None,
            },
        );
        du.emission_factor = u.emission_factor;
        if u.benefit_eur_per_m3 != 0.0 {
            du.benefit = Benefit::Linear {
                eur_per_m3: u.benefit_eur_per_m3,
            };
        }
        demand_units.push(du);
    }
    nodes.push(Node::new("sea", basin_alloc::NodeKind::Sink));
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "bipartite".into(),
        volume_unit: VolumeUnit::Hm3,
        horizon: DateRange::new(start_date(), days),
        network: NetworkModel {
            nodes,
            links,
            horizon: days,
        },
        units: demand_units,
        sources: default_sources().expect("bundled sources"),
        quality: QualityMatrix::default(),
        weights,
        normalizers,
        grid_emission_factor: GridEmissionFactor::default(),
        rules: RuleFlags::default(),
        reference: None,
    }
}

fn supply_of(plan: &AllocationPlan, unit: &str, kind: SourceKind, t: usize) -> f64 {
    plan.supply
        .get(unit)
        .and_then(|m| m.get(&kind))
        .map_or(0.0, |v| v[t])
}

/// Constraint properties every solved plan must satisfy.
pub fn plan_properties(s: &Scenario, plan: &AllocationPlan) -> Result<(), String> {
    let days = plan.horizon.days;
    let net = s.network.truncated(days);
    for u in &s.units {
        let demand = &plan.demand[&u.id];
        let deficit = &plan.deficit_by_unit[&u.id];
        let allowed = allowed_sources(u, &s.quality).map_err(|e| e.to_string())?;
        for t in 0..days {
            let total: f64 = SourceKind::ALL.iter().map(|&k| supply_of(plan, &u.id, k, t)).sum();
            if total - demand[t] > 1e-9 {
                return Err(format!("{} day {t}: supply {total} exceeds demand {}", u.id, demand[t]));
            }
            if (total + deficit[t] - demand[t]).abs() > 1e-6 {
                return Err(format!("{} day {t}: supply + deficit != demand", u.id));
            }
            for &k in &SourceKind::ALL {
                let v = supply_of(plan, &u.id, k, t);
                if v < 0.0 {
                    return Err(format!("{} day {t}: negative {k} supply {v}", u.id));
                }
                if !allowed.contains(&k) && v != 0.0 {
                    return Err(format!("{} day {t}: disallowed {k} supply {v}", u.id));
                }
            }
        }
        if u.kind == DemandKind::WDU && deficit.iter().any(|&d| d != 0.0) {
            return Err(format!("wetland {} has a deficit", u.id));
        }
    }
    for l in &net.links {
        if let Some(min) = &l.ecological_min {
            let flows = plan.flows.link_flows.get(&l.key());
            for t in 0..days {
                let f = flows.map_or(0.0, |v| v[t]);
                if f < min.at(t) - 1e-9 * (1.0 + min.at(t)) {
                    return Err(format!("link {} day {t}: flow {f} below ecological minimum", l.key()));
                }
            }
        }
    }
    let report = simulate(&net, &plan.flows).map_err(|e| e.to_string())?;
    if !report.feasible {
        return Err(format!("audit infeasible: {:?}", report.issues.first()));
    }
    let supplied: f64 = plan.supply.values().flat_map(|m| m.values()).flatten().sum();
    let deficit: f64 = plan.deficit_by_unit.values().flatten().sum();
    let demand: f64 = plan.demand.values().flatten().sum();
    if (supplied + deficit - demand).abs() > 1e-6 {
        return Err(format!("totals: supply {supplied} + deficit {deficit} != demand {demand}"));
    }
    Ok(())
}

/// Per-hm³ objective coefficient of unit `u` drawing source kind `k`.
fn unit_cost(s: &Scenario, u: &DemandUnit, k: SourceKind, n: &Normalizers) -> f64 {
    let spec = s.sources.iter().find(|sp| sp.kind == k).unwrap();
    let benefit = match u.benefit {
        Benefit::Linear { eur_per_m3 } => eur_per_m3,
        _ => 0.0,
    };
    let co2 = spec.co2_per_m3.unwrap_or(spec.energy_density * s.grid_emission_factor.0);
    s.weights.economic * 1e6 * (spec.cost_per_m3 - benefit) / n.economic_eur
        + s.weights.co2 * 1e6 * (co2 + u.emission_factor) / n.co2_kg
}

/// True (unapproximated) weighted objective of a plan's supplies.
pub fn true_objective(s: &Scenario, plan: &AllocationPlan, n: &Normalizers) -> f64 {
    let mut total = 0.0;
    for u in &s.units {
        let d = &plan.demand[&u.id];
        for t in 0..plan.horizon.days {
            let mut sup = 0.0;
            for &k in &SourceKind::ALL {
                let v = supply_of(plan, &u.id, k, t);
                sup += v;
                total += v * unit_cost(s, u, k, n);
            }
            if d[t] > 0.0 && u.kind != DemandKind::WDU {
                let f = (d[t] - sup) / d[t];
                total += s.weights.deficit * f * f;
            }
        }
    }
    total
}

/// Cheapest way to serve per-unit totals `totals` from at most two pools.
/// `cost[i][k]` is `None` when unit `i` may not use pool `k`.
fn split_cost(totals: &[f64], cost: &[Vec<Option<f64>>], avail: &[f64]) -> Option<f64> {
    match avail.len() {
        0 => totals.iter().all(|&x| x == 0.0).then_some(0.0),
        1 => {
            let mut used = 0.0;
            let mut c = 0.0;
            for (i, &x) in totals.iter().enumerate() {
                if x > 0.0 {
                    c += x * cost[i][0]?;
                    used += x;
                }
            }
            (used <= avail[0] + 1e-12).then_some(c)
        }
        _ => {
            // Units fixed to one pool, then a flexible amount q of pool 0
            // handed out to the units that gain most from it.
            let (mut forced0, mut forced1, mut base) = (0.0, 0.0, 0.0);
            let mut flex: Vec<(f64, f64)> = Vec::new();
            for (i, &x) in totals.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                match (cost[i][0], cost[i][1]) {
                    (None, None) => return None,
                    (Some(a), None) => {
                        forced0 += x;
                        base += a * x;
                    }
                    (None, Some(b)) => {
                        forced1 += x;
                        base += b * x;
                    }
                    (Some(a), Some(b)) => {
                        base += b * x;
                        flex.push((a - b, x));
                    }
                }
            }
            let f: f64 = flex.iter().map(|p| p.1).sum();
            let lo = (f + forced1 - avail[1]).max(0.0);
            let hi = (avail[0] - forced0).min(f);
            if lo > hi + 1e-12 {
                return None;
            }
            flex.sort_by(|a, b| a.0.total_cmp(&b.0));
            let gainful: f64 = flex.iter().filter(|p| p.0 < 0.0).map(|p| p.1).sum();
            let mut q = gainful.clamp(lo, hi.max(lo));
            let mut c = base;
            for (d, x) in flex {
                let take = x.min(q);
                c += d * take;
                q -= take;
            }
            Some(c)
        }
    }
}

/// Exhaustive search over supplies on a grid of 1/1000 of each unit's
/// demand, for bipartite basins with up to three units and two sources.
/// The last unit's coordinate is searched by bisection on its forward
/// difference, which is exact because the objective is convex along it.
pub fn grid_optimum(s: &Scenario, n: &Normalizers) -> f64 {
    const STEPS: usize = 1000;
    let days = s.horizon.days;
    let demands: Vec<Vec<f64>> = s
        .units
        .iter()
        .map(|u| match &u.demand {
            DemandProfile::ForecastSeries { series: Series::Daily(v), .. } => v.clone(),
            _ => panic!("bipartite units carry inline forecasts"),
        })
        .collect();
    let pools: Vec<(SourceKind, &Series)> = s
        .network
        .nodes
        .iter()
        .filter_map(|nd| match &nd.kind {
            basin_alloc::NodeKind::Source {
                source_kind,
                availability: Some(a),
            } => Some((*source_kind, a)),
            _ => None,
        })
        .collect();
    let cost: Vec<Vec<Option<f64>>> = s
        .units
        .iter()
        .map(|u| {
            let allowed = allowed_sources(u, &s.quality).unwrap();
            pools
                .iter()
                .map(|(k, _)| allowed.contains(k).then(|| unit_cost(s, u, *k, n)))
                .collect()
        })
        .collect();
    let nu = s.units.len();
    let mut total = 0.0;
    for t in 0..days {
        let avail: Vec<f64> = pools.iter().map(|(_, a)| a.at(t)).collect();
        let d: Vec<f64> = demands.iter().map(|v| v[t]).collect();
        let eval = |idx: &[usize]| -> Option<f64> {
            let totals: Vec<f64> = idx.iter().zip(&d).map(|(&j, &di)| di * j as f64 / STEPS as f64).collect();
            let c = split_cost(&totals, &cost, &avail)?;
            let def: f64 = idx
                .iter()
                .map(|&j| {
                    let f = 1.0 - j as f64 / STEPS as f64;
                    s.weights.deficit * f * f
                })
                .sum();
            Some(c + def)
        };
        let mut best = f64::INFINITY;
        let outer = nu.saturating_sub(1);
        let mut idx = vec![0usize; nu];
        let combos = (STEPS + 1).pow(outer as u32);
        for mut code in 0..combos {
            for slot in idx.iter_mut().take(outer) {
                *slot = code % (STEPS + 1);
                code /= STEPS + 1;
            }
            let mut probe = idx.clone();
            let mut f = |j: usize| {
                probe[nu - 1] = j;
                eval(&probe)
            };
            if f(0).is_none() {
                continue;
            }
            // Largest feasible index of the last coordinate.
            let (mut lo, mut hi) = (0usize, STEPS);
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if f(mid).is_some() {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            let top = lo;
            // First index whose forward difference is non-negative.
            let (mut a, mut b) = (0usize, top);
            while a < b {
                let mid = (a + b) / 2;
                if f(mid + 1).unwrap() >= f(mid).unwrap() {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            best = best.min(f(a).unwrap());
        }
        total += best;
    }
    total
}

const KINDS: [DemandKind; 4] = [DemandKind::UDU, DemandKind::ADU, DemandKind::IDU, DemandKind::SDU];

/// Random bipartite basin: 1–3 units, 1–2 sources, 1–2 days.
pub fn random_tiny<R: Rng>(rng: &mut R) -> Scenario {
    let days = rng.gen_range(1..=2);
    let nu = rng.gen_range(1..=3);
    let ns = rng.gen_range(1..=2);
    let mut kinds = SourceKind::ALL.to_vec();
    let mut sources = Vec::new();
    for _ in 0..ns {
        let kind = kinds.remove(rng.gen_range(0..kinds.len()));
        let avail = (0..days).map(|_| f64::from(rng.gen_range(3..=30)) / 10.0).collect();
        sources.push((kind, avail));
    }
    let units: Vec<UnitSpec> = (0..nu)
        .map(|_| {
            let mut u = UnitSpec::new(
                KINDS[rng.gen_range(0..KINDS.len())],
                (0..days).map(|_| f64::from(rng.gen_range(5..=20)) / 10.0).collect(),
            );
            u.emission_factor = f64::from(rng.gen_range(0..=20)) / 10.0;
            if rng.gen_bool(0.3) {
                u.benefit_eur_per_m3 = f64::from(rng.gen_range(0..=10)) / 10.0;
            }
            u
        })
        .collect();
    let w = CostWeights::new(
        f64::from(rng.gen_range(2..=10)) / 10.0,
        f64::from(rng.gen_range(0..=5)) / 10.0,
        f64::from(rng.gen_range(0..=5)) / 10.0,
    );
    bipartite(
        &units,
        &sources,
        w,
        Some(Normalizers {
            economic_eur: 1e6,
            co2_kg: 1e6,
        }),
    )
}

/// Worst-case chord error of the deficit terms: one 1/(4K²) per unit-day.
pub fn pwl_bound(s: &Scenario, segments: usize) -> f64 {
    let terms = s.units.iter().filter(|u| u.kind != DemandKind::WDU).count() * s.horizon.days;
    s.weights.deficit * terms as f64 / (4.0 * (segments * segments) as f64)
}

/// Sum over members of a kind of horizon supply, per kind.
pub fn kind_totals(plan: &AllocationPlan) -> BTreeMap<DemandKind, (f64, f64)> {
    let mut out: BTreeMap<DemandKind, (f64, f64)> = BTreeMap::new();
    for u in &plan.units {
        let d: f64 = plan.demand[&u.id].iter().sum();
        let x: f64 = plan.deficit_by_unit[&u.id].iter().sum();
        let e = out.entry(u.kind).or_default();
        e.0 += d;
        e.1 += x;
    }
    out
}

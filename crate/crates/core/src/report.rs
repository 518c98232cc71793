//! Presentation views of a plan: resampled deficit series, per-unit
//! allocation rows, source usage and KPI tables, and their CSV forms.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::demand::DemandKind;
use crate::impact::ImpactReport;
use crate::optimizer::{AllocationPlan, ObjectiveBreakdown};
use crate::source::SourceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Daily,
    /// Seven-day buckets counted from the horizon start.
    Weekly,
    /// Calendar months.
    Monthly,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "daily" => Ok(Granularity::Daily),
            "weekly" => Ok(Granularity::Weekly),
            "monthly" => Ok(Granularity::Monthly),
            other => Err(format!("unknown granularity `{other}` (daily, weekly, monthly)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    Kind,
    Unit,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kind" => Ok(GroupBy::Kind),
            "unit" => Ok(GroupBy::Unit),
            other => Err(format!("unknown grouping `{other}` (kind, unit)")),
        }
    }
}

/// Consecutive day ranges `[start, end)` of the horizon.
fn buckets(plan: &AllocationPlan, g: Granularity) -> Vec<(usize, usize)> {
    let days = plan.horizon.days;
    let mut out = Vec::new();
    let mut t = 0;
    while t < days {
        let end = match g {
            Granularity::Daily => t + 1,
            Granularity::Weekly => t + 7,
            Granularity::Monthly => {
                let d = plan.horizon.date(t);
                let mut e = t + 1;
                while e < days && plan.horizon.date(e).month() == d.month() {
                    e += 1;
                }
                e
            }
        };
        out.push((t, end.min(days)));
        t = end;
    }
    out
}

/// One resampled period of a deficit series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitPoint {
    pub start: NaiveDate,
    pub days: usize,
    /// Deficit volume over the period, hm³.
    pub deficit: f64,
    pub demand: f64,
    /// Mean over member units of their period deficit fraction, %;
    /// `None` when no member has demand in the period.
    pub average_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitSeries {
    /// Demand kind or unit id.
    pub key: String,
    pub units: Vec<String>,
    pub points: Vec<DeficitPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitView {
    pub granularity: Granularity,
    pub by: GroupBy,
    pub series: Vec<DeficitSeries>,
}

/// Deficit totals and average percentages per kind (or unit), resampled.
/// At daily granularity by kind this reproduces the plan's aggregates.
pub fn deficit_view(plan: &AllocationPlan, granularity: Granularity, by: GroupBy) -> DeficitView {
    let groups: Vec<(String, Vec<String>)> = match by {
        GroupBy::Kind => {
            let mut m: BTreeMap<DemandKind, Vec<String>> = BTreeMap::new();
            for u in &plan.units {
                m.entry(u.kind).or_default().push(u.id.clone());
            }
            m.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
        }
        GroupBy::Unit => plan.units.iter().map(|u| (u.id.clone(), vec![u.id.clone()])).collect(),
    };
    let periods = buckets(plan, granularity);
    let series = groups
        .into_iter()
        .map(|(key, units)| {
            let points = periods
                .iter()
                .map(|&(a, b)| {
                    let mut deficit = 0.0;
                    let mut demand = 0.0;
                    let mut fractions = Vec::new();
                    for u in &units {
                        let d: f64 = plan.demand[u][a..b].iter().sum();
                        let x: f64 = plan.deficit_by_unit[u][a..b].iter().sum();
                        deficit += x;
                        demand += d;
                        if d > 0.0 {
                            fractions.push(x / d * 100.0);
                        }
                    }
                    let average_percent =
                        (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64);
                    DeficitPoint {
                        start: plan.horizon.date(a),
                        days: b - a,
                        deficit,
                        demand,
                        average_percent,
                    }
                })
                .collect();
            DeficitSeries { key, units, points }
        })
        .collect();
    DeficitView {
        granularity,
        by,
        series,
    }
}

/// Horizon supply of one unit split by source kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub unit: String,
    pub kind: DemandKind,
    /// hm³ over the horizon for every source kind, zero when unused.
    pub by_source: BTreeMap<SourceKind, f64>,
    pub total_supply: f64,
    pub demand: f64,
    pub deficit: f64,
    pub deficit_percent: Option<f64>,
}

/// Per-unit supply-by-source rows; `unit` filters by unit id or demand kind.
pub fn allocation_rows(plan: &AllocationPlan, unit: Option<&str>) -> Vec<AllocationRow> {
    plan.units
        .iter()
        .filter(|u| unit.is_none_or(|f| f == u.id || f.parse::<DemandKind>().is_ok_and(|k| k == u.kind)))
        .map(|u| {
            let by_source: BTreeMap<SourceKind, f64> = SourceKind::ALL
                .iter()
                .map(|&k| {
                    let v = plan
                        .supply
                        .get(&u.id)
                        .and_then(|m| m.get(&k))
                        .map_or(0.0, |s| s.iter().sum());
                    (k, v)
                })
                .collect();
            let total_supply = by_source.values().sum();
            let demand: f64 = plan.demand[&u.id].iter().sum();
            let deficit: f64 = plan.deficit_by_unit[&u.id].iter().sum();
            AllocationRow {
                unit: u.id.clone(),
                kind: u.kind,
                by_source,
                total_supply,
                demand,
                deficit,
                deficit_percent: (demand > 0.0).then(|| deficit / demand * 100.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceUsage {
    pub kind: SourceKind,
    pub supply: f64,
    /// Fraction of total supply, in [0, 1].
    pub share: f64,
    pub co2_t: f64,
    pub cost_eur: f64,
}

/// Source kinds by decreasing supply (ties in declaration order).
pub fn source_usage(plan: &AllocationPlan) -> Vec<SourceUsage> {
    let k = &plan.kpis;
    let total: f64 = k.supply_by_source.values().sum();
    let mut rows: Vec<SourceUsage> = SourceKind::ALL
        .iter()
        .map(|&kind| {
            let supply = k.supply_by_source.get(&kind).copied().unwrap_or(0.0);
            SourceUsage {
                kind,
                supply,
                share: if total > 0.0 { supply / total } else { 0.0 },
                co2_t: k.co2_by_source.get(&kind).copied().unwrap_or(0.0),
                cost_eur: k.cost_by_source.get(&kind).copied().unwrap_or(0.0),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.supply.total_cmp(&a.supply));
    rows
}

/// KPI payload: impact ledger, objective terms and headline deficit numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiView {
    pub impact: ImpactReport,
    pub objective_breakdown: ObjectiveBreakdown,
    pub sources: Vec<SourceUsage>,
    pub top_source: Option<SourceKind>,
    pub total_demand: f64,
    pub total_supply: f64,
    pub total_deficit: f64,
    pub deficit_fraction: f64,
    pub average_percent_by_kind: BTreeMap<DemandKind, Option<f64>>,
}

pub fn kpi_view(plan: &AllocationPlan) -> KpiView {
    let sources = source_usage(plan);
    let a = &plan.aggregates;
    KpiView {
        impact: plan.kpis.clone(),
        objective_breakdown: plan.objective_breakdown.clone(),
        top_source: sources.first().filter(|s| s.supply > 0.0).map(|s| s.kind),
        sources,
        total_demand: a.total_demand,
        total_supply: a.total_supply,
        total_deficit: a.total_deficit,
        deficit_fraction: a.deficit_fraction,
        average_percent_by_kind: a.by_kind.iter().map(|(k, v)| (*k, v.horizon_average_percent)).collect(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn deficits_csv(view: &DeficitView) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "start", "days", "deficit_hm3", "demand_hm3", "average_percent"])?;
    for s in &view.series {
        for p in &s.points {
            w.write_record([
                s.key.clone(),
                p.start.to_string(),
                p.days.to_string(),
                p.deficit.to_string(),
                p.demand.to_string(),
                opt(p.average_percent),
            ])?;
        }
    }
    finish(w)
}

pub fn allocations_csv(rows: &[AllocationRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["unit".to_owned(), "kind".to_owned()];
    header.extend(SourceKind::ALL.iter().map(|k| format!("{k}_hm3")));
    header.extend(["supply_hm3", "demand_hm3", "deficit_hm3", "deficit_percent"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.unit.clone(), r.kind.to_string()];
        rec.extend(r.by_source.values().map(|v| v.to_string()));
        rec.extend([
            r.total_supply.to_string(),
            r.demand.to_string(),
            r.deficit.to_string(),
            opt(r.deficit_percent),
        ]);
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn sources_csv(rows: &[SourceUsage]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "supply_hm3", "share", "co2_t", "cost_eur"])?;
    for r in rows {
        w.write_record([
            r.kind.to_string(),
            r.supply.to_string(),
            r.share.to_string(),
            r.co2_t.to_string(),
            r.cost_eur.to_string(),
        ])?;
    }
    finish(w)
}

pub fn kpis_csv(k: &KpiView) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value"])?;
    let mut row = |m: &str, v: String| w.write_record([m, v.as_str()]);
    row("co2_total_t", k.impact.co2_total.to_string())?;
    row("economic_cost_eur", k.impact.economic_cost.to_string())?;
    row("economic_benefit_eur", k.impact.economic_benefit.to_string())?;
    row("net_economic_eur", k.impact.net_economic.to_string())?;
    row("objective_deficit", k.objective_breakdown.deficit.to_string())?;
    row("objective_economic", k.objective_breakdown.economic.to_string())?;
    row("objective_co2", k.objective_breakdown.co2.to_string())?;
    row("objective_total", k.objective_breakdown.total.to_string())?;
    row("total_demand_hm3", k.total_demand.to_string())?;
    row("total_supply_hm3", k.total_supply.to_string())?;
    row("total_deficit_hm3", k.total_deficit.to_string())?;
    row("deficit_fraction", k.deficit_fraction.to_string())?;
    for (kind, p) in &k.average_percent_by_kind {
        row(&format!("average_percent_{kind}"), opt(*p))?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes `deficits.csv` (daily, by kind), `allocations.csv`, `sources.csv`
/// and `kpis.csv` into `dir`.
pub fn write_csv_reports(plan: &AllocationPlan, dir: &Path) -> Result<Vec<String>, ReportError> {
    fs::create_dir_all(dir)?;
    let files = [
        ("deficits.csv", deficits_csv(&deficit_view(plan, Granularity::Daily, GroupBy::Kind))?),
        ("allocations.csv", allocations_csv(&allocation_rows(plan, None))?),
        ("sources.csv", sources_csv(&source_usage(plan))?),
        ("kpis.csv", kpis_csv(&kpi_view(plan))?),
    ];
    let mut names = Vec::new();
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
        names.push(name.to_owned());
    }
    Ok(names)
}

/// Plain-text summary for terminals.
pub struct TextReport<'a>(pub &'a AllocationPlan);

impl fmt::Display for TextReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.0;
        let k = kpi_view(p);
        writeln!(f, "plan for `{}` ({} days from {})", p.scenario_name, p.horizon.days, p.horizon.start)?;
        writeln!(f, "scenario digest {}", p.scenario_digest)?;
        writeln!(
            f,
            "solver {:?}: {} iterations, {} nodes, {} stage(s), objective {:.6}",
            p.solver.status, p.solver.iterations, p.solver.nodes, p.solver.stages, p.solver.objective
        )?;
        writeln!(f, "\nsource usage (hm³, share, t CO2, €)")?;
        for s in &k.sources {
            writeln!(
                f,
                "  {:<13}{:>12.3}{:>8.1}%{:>14.1}{:>16.0}",
                s.kind.as_str(),
                s.supply,
                s.share * 100.0,
                s.co2_t,
                s.cost_eur
            )?;
        }
        writeln!(f, "\ndeficit by demand kind (hm³, average %)")?;
        for (kind, d) in &p.aggregates.by_kind {
            let pct = d.horizon_average_percent.map_or("-".into(), |v| format!("{v:.2}%"));
            writeln!(f, "  {:<5}{:>12.3}{:>10}", kind.to_string(), d.horizon_deficit, pct)?;
        }
        writeln!(
            f,
            "\ndemand {:.3} hm³, supply {:.3} hm³, deficit {:.3} hm³ ({:.2}%)",
            k.total_demand,
            k.total_supply,
            k.total_deficit,
            k.deficit_fraction * 100.0
        )?;
        writeln!(
            f,
            "CO2 {:.1} t; cost {:.0} €, benefit {:.0} €, net {:.0} €",
            k.impact.co2_total, k.impact.economic_cost, k.impact.economic_benefit, k.impact.net_economic
        )?;
        write!(
            f,
            "audit: {} (max residual {:.3e})",
            if p.audit.feasible { "feasible" } else { "INFEASIBLE" },
            p.audit.max_abs_residual
        )
    }
}

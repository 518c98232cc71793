mod support;

use std::fs;

use basin_alloc::demand::DemandKind;
use basin_alloc::optimizer::{optimize, AllocationPlan, OptimizeOptions};
use basin_alloc::report::{
    allocation_rows, deficit_view, kpi_view, source_usage, write_csv_reports, Granularity, GroupBy, TextReport,
};
use basin_alloc::scenario::CostWeights;
use basin_alloc::source::SourceKind;
use support::{bipartite, UnitSpec};

const DAYS: usize = 40;

/// Two agricultural units, one with a zero-demand first week, sharing a
/// short surface supply and an ample desalination plant, starting 1 June.
fn plan() -> AllocationPlan {
    let mut second = vec![2.0; DAYS];
    second[..7].fill(0.0);
    let s = bipartite(
        &[UnitSpec::new(DemandKind::ADU, vec![1.0; DAYS]), UnitSpec::new(DemandKind::ADU, second)],
        &[
            (SourceKind::Surface, vec![1.5; DAYS]),
            (SourceKind::Desalination, vec![0.3; DAYS]),
        ],
        CostWeights::new(1.0, 0.0, 0.0),
        None,
    );
    optimize(&s, &OptimizeOptions::default()).unwrap()
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

/// Mean over units with positive period demand of period deficit / demand.
fn expected_average(plan: &AllocationPlan, units: &[&str], a: usize, b: usize) -> Option<f64> {
    let pcts: Vec<f64> = units
        .iter()
        .filter_map(|u| {
            let d = sum(&plan.demand[*u][a..b]);
            (d > 0.0).then(|| 100.0 * sum(&plan.deficit_by_unit[*u][a..b]) / d)
        })
        .collect();
    (!pcts.is_empty()).then(|| sum(&pcts) / pcts.len() as f64)
}

#[test]
fn monthly_buckets_follow_the_calendar() {
    let p = plan();
    let v = deficit_view(&p, Granularity::Monthly, GroupBy::Kind);
    assert_eq!(v.series.len(), 1);
    let s = &v.series[0];
    assert_eq!(s.key, "ADU");
    assert_eq!(s.units, vec!["ADU01", "ADU02"]);
    let days: Vec<usize> = s.points.iter().map(|pt| pt.days).collect();
    assert_eq!(days, vec![30, 10], "June, then ten days of July");
    assert_eq!(s.points[1].start.to_string(), "2024-07-01");
    for (pt, (a, b)) in s.points.iter().zip([(0, 30), (30, 40)]) {
        let deficit = sum(&p.deficit_by_unit["ADU01"][a..b]) + sum(&p.deficit_by_unit["ADU02"][a..b]);
        assert!((pt.deficit - deficit).abs() < 1e-9);
        let avg = expected_average(&p, &["ADU01", "ADU02"], a, b).unwrap();
        assert!((pt.average_percent.unwrap() - avg).abs() < 1e-9);
    }
}

#[test]
fn weekly_and_daily_buckets_and_unit_grouping() {
    let p = plan();
    let weekly = deficit_view(&p, Granularity::Weekly, GroupBy::Unit);
    assert_eq!(weekly.series.len(), 2);
    let days: Vec<usize> = weekly.series[0].points.iter().map(|pt| pt.days).collect();
    assert_eq!(days, vec![7, 7, 7, 7, 7, 5]);
    // The second unit has no demand in the first week: no percentage.
    let second = weekly.series.iter().find(|s| s.key == "ADU02").unwrap();
    assert_eq!(second.points[0].average_percent, None);
    assert_eq!(second.points[0].demand, 0.0);

    let daily = deficit_view(&p, Granularity::Daily, GroupBy::Kind);
    assert_eq!(daily.series[0].points.len(), DAYS);
    for t in [0, 6, 7, 39] {
        assert_eq!(
            daily.series[0].points[t].average_percent,
            expected_average(&p, &["ADU01", "ADU02"], t, t + 1),
            "day {t}"
        );
    }
}

#[test]
fn allocation_rows_cover_every_source_kind() {
    let p = plan();
    let rows = allocation_rows(&p, None);
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.by_source.len(), SourceKind::ALL.len());
        let supply: f64 = p.supply[&r.unit].values().map(|v| sum(v)).sum();
        assert!((r.total_supply - supply).abs() < 1e-9);
        assert!((r.total_supply + r.deficit - r.demand).abs() < 1e-9);
        let pct = 100.0 * r.deficit / r.demand;
        assert!((r.deficit_percent.unwrap() - pct).abs() < 1e-9);
    }
    assert_eq!(allocation_rows(&p, Some("ADU")).len(), 2);
    let one = allocation_rows(&p, Some("ADU02"));
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].unit, "ADU02");
    assert!(allocation_rows(&p, Some("UDU01")).is_empty());
}

#[test]
fn source_usage_is_in_tonnes_and_sorted() {
    let p = plan();
    let rows = source_usage(&p);
    assert_eq!(rows[0].kind, SourceKind::Surface);
    assert!(rows.windows(2).all(|w| w[0].supply >= w[1].supply));
    let shares: f64 = rows.iter().map(|r| r.share).sum();
    assert!((shares - 1.0).abs() < 1e-12);
    // Table factors in kg/m³; 1 hm³ = 1e6 m³, 1 t = 1e3 kg.
    for (kind, kg_per_m3, eur_per_m3) in [(SourceKind::Surface, 0.0212, 0.003), (SourceKind::Desalination, 1.529, 0.6)] {
        let r = rows.iter().find(|r| r.kind == kind).unwrap();
        assert!(r.supply > 0.0);
        assert!((r.co2_t - r.supply * 1e6 * kg_per_m3 / 1e3).abs() < 1e-6 * r.co2_t, "{kind:?}");
        assert!((r.cost_eur - r.supply * 1e6 * eur_per_m3).abs() < 1e-6 * r.cost_eur, "{kind:?}");
    }
}

#[test]
fn kpi_view_totals_agree_with_the_plan() {
    let p = plan();
    let k = kpi_view(&p);
    let demand: f64 = p.demand.values().map(|v| sum(v)).sum();
    let deficit: f64 = p.deficit_by_unit.values().map(|v| sum(v)).sum();
    assert!((k.total_demand - demand).abs() < 1e-9);
    assert!((k.total_deficit - deficit).abs() < 1e-9);
    assert!((k.total_supply + k.total_deficit - k.total_demand).abs() < 1e-9);
    assert!((k.deficit_fraction - deficit / demand).abs() < 1e-12);
    assert_eq!(k.top_source, Some(SourceKind::Surface));
    let by_source: f64 = k.sources.iter().map(|s| s.co2_t).sum();
    assert!((by_source - k.impact.co2_by_source.values().sum::<f64>()).abs() < 1e-9);
}

#[test]
fn csv_tables_round_trip_their_numbers() {
    let p = plan();
    let dir = tempfile::tempdir().unwrap();
    write_csv_reports(&p, dir.path()).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("allocations.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("{name} in {headers:?}"));
    let (unit, total) = (col("unit"), col("supply_hm3"));
    let rows = allocation_rows(&p, None);
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let row = rows.iter().find(|x| x.unit == rec[unit]).unwrap();
        assert_eq!(rec[total].parse::<f64>().unwrap(), row.total_supply);
        n += 1;
    }
    assert_eq!(n, 2);
    for f in ["deficits.csv", "sources.csv", "kpis.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f}");
    }
    let text = TextReport(&p).to_string();
    assert!(text.contains("surface") && text.contains("ADU"));
}

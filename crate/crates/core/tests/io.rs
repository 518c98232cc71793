mod support;

use std::fs;

use basin_alloc::demand::{DemandKind, DemandProfile};
use basin_alloc::io::{
    data_dir, export_plan, import_plan, import_plan_for, load_scenario, parse_scenario, plan_from_str, plan_to_string,
    resimulate, resolve_scenario_path, save_scenario, LoadError, LoadOptions,
};
use basin_alloc::network::NodeKind;
use basin_alloc::optimizer::{optimize, OptimizeOptions};
use basin_alloc::scenario::CostWeights;
use basin_alloc::series::Series;
use basin_alloc::source::SourceKind;

const STRICT: LoadOptions = LoadOptions { strict: true };
const LENIENT: LoadOptions = LoadOptions { strict: false };

fn tiny_text() -> String {
    fs::read_to_string(data_dir().join("tiny.scenario")).unwrap()
}

#[test]
fn tiny_fixture_loads() {
    let l = load_scenario(resolve_scenario_path("tiny")).unwrap();
    assert_eq!(l.scenario.network.nodes.len(), 3);
    assert_eq!(l.scenario.units.len(), 1);
    assert_eq!(l.scenario.network.horizon, 15);
    assert_eq!(l.scenario.sources.len(), 5, "defaults fill every kind");
    assert!(l.report.is_ok());
}

// 0.318 is a table factor, not an approximation of 1/π.
#[allow(clippy::approx_constant)]
#[test]
fn segura_fixture_carries_table_aggregates() {
    let l = load_scenario(resolve_scenario_path("segura-6m")).unwrap();
    let s = &l.scenario;
    let table = [
        (SourceKind::Surface, 0.06, 0.0212, 0.003),
        (SourceKind::Groundwater, 0.9, 0.318, 0.25),
        (SourceKind::Desalination, 4.32, 1.529, 0.6),
        (SourceKind::Recycling, 0.78, 0.276, 0.0),
        (SourceKind::Transfer, 1.21, 0.428, 0.15),
    ];
    for (k, density, co2, cost) in table {
        let sp = s.spec(k).unwrap();
        assert_eq!((sp.energy_density, sp.co2_per_m3, sp.cost_per_m3), (density, Some(co2), cost));
    }
    let annual = |kind: DemandKind| -> f64 {
        s.units
            .iter()
            .filter(|u| u.kind == kind)
            .filter_map(|u| u.demand.annual_total())
            .sum()
    };
    assert!((annual(DemandKind::UDU) - 200.9).abs() < 1e-9);
    assert_eq!(annual(DemandKind::SDU), 11.2);
    assert_eq!(annual(DemandKind::IDU), 8.5);
    let reference = s.reference.as_ref().unwrap();
    let adu = reference.demands.iter().find(|d| d.name == "ADU").unwrap();
    assert_eq!(adu.hm3, 1476.3);
    // Forecasts were inlined and keep their own start date.
    for u in s.units.iter().filter(|u| u.kind == DemandKind::ADU) {
        match &u.demand {
            DemandProfile::ForecastSeries { start, series, lower, upper } => {
                assert_eq!(*start, Some(s.horizon.start));
                assert!(series.is_resolved() && series.covers(s.horizon.days));
                assert!(lower.as_ref().unwrap().is_resolved() && upper.as_ref().unwrap().is_resolved());
            }
            other => panic!("ADU profile {other:?}"),
        }
    }
    // Every identity holds exactly.
    assert_eq!(l.report.identities.len(), 3);
    assert!(l.report.identities.iter().all(|c| c.passed && c.residual == 0.0));
}

#[test]
fn every_shipped_fixture_passes_consistency_checks() {
    for entry in fs::read_dir(data_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "scenario") {
            let l = load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(l.report.is_ok(), "{}", path.display());
        }
    }
}

#[test]
fn strict_mode_rejects_unknown_fields() {
    let text = tiny_text().replace("\"name\": \"tiny\",", "\"name\": \"tiny\", \"colour\": \"blue\",");
    match parse_scenario(&text, None, STRICT) {
        Err(LoadError::UnknownFields(f)) => assert_eq!(f, vec!["colour".to_owned()]),
        other => panic!("{other:?}"),
    }
    let lenient = parse_scenario(&text, None, LENIENT).unwrap();
    assert!(lenient.report.warnings.iter().any(|w| w.contains("colour")));
}

#[test]
fn nested_unknown_fields_are_found() {
    let text = tiny_text().replace("\"kind\": \"sink\"", "\"kind\": \"sink\", \"depth\": 3");
    match parse_scenario(&text, None, STRICT) {
        Err(LoadError::UnknownFields(f)) => assert_eq!(f, vec!["network.nodes[2].depth".to_owned()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn parse_errors_carry_a_position() {
    let text = tiny_text().replacen("\"tiny\"", "tiny", 1);
    match parse_scenario(&text, None, STRICT) {
        Err(LoadError::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert!(column > 0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unsupported_volume_units_are_rejected() {
    let text = tiny_text().replace("\"name\": \"tiny\",", "\"name\": \"tiny\", \"volume_unit\": \"m3\",");
    assert!(matches!(parse_scenario(&text, None, STRICT), Err(LoadError::Parse { .. })));
}

#[test]
fn validation_errors_are_aggregated() {
    let text = tiny_text()
        .replace("\"to\": \"town\"", "\"to\": \"village\"")
        .replace("\"deficit\": 1.0", "\"deficit\": -1.0");
    match parse_scenario(&text, None, STRICT) {
        Err(LoadError::Validation(r)) => assert!(r.errors.len() >= 2, "{:?}", r.errors),
        other => panic!("{other:?}"),
    }
}

#[test]
fn urban_desalination_override_warns() {
    let text = tiny_text().replace(
        "\"emission_factor\": 0.017432137",
        "\"emission_factor\": 0.017432137, \"allowed_kinds\": [\"surface\", \"desalination\"]",
    );
    let l = parse_scenario(&text, None, STRICT).unwrap();
    assert!(l.report.warnings.iter().any(|w| w.contains("desalination")), "{:?}", l.report.warnings);
}

#[test]
fn save_load_save_is_byte_identical() {
    for name in ["tiny", "segura-6m"] {
        let l = load_scenario(resolve_scenario_path(name)).unwrap();
        let first = save_scenario(&l.scenario);
        let again = parse_scenario(&first, None, STRICT).unwrap();
        let second = save_scenario(&again.scenario);
        assert_eq!(first, second, "{name}");
        assert_eq!(again.scenario, l.scenario);
        assert_eq!(again.scenario.digest(), l.scenario.digest());
    }
}

#[test]
fn csv_references_resolve_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("series")).unwrap();
    fs::write(
        dir.path().join("series/spring.csv"),
        "date,value\n2024-05-30,9\n2024-05-31,9\n2024-06-01,1\n2024-06-02,2\n2024-06-03,3\n",
    )
    .unwrap();
    let text = tiny_text()
        .replace("\"days\": 15", "\"days\": 3")
        .replace("\"availability\": 1.0", "\"availability\": {\"csv\": \"series/spring.csv\"}");
    let path = dir.path().join("local.scenario");
    fs::write(&path, text).unwrap();
    let l = load_scenario(&path).unwrap();
    match &l.scenario.network.nodes[0].kind {
        NodeKind::Source { availability: Some(Series::Daily(v)), .. } => assert_eq!(v, &vec![1.0, 2.0, 3.0]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_side_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let base = tiny_text().replace("\"availability\": 1.0", "\"availability\": {\"csv\": \"a.csv\", \"column\": \"flow\"}");
    let path = dir.path().join("s.scenario");
    fs::write(&path, &base).unwrap();
    assert!(matches!(load_scenario(&path), Err(LoadError::Io { .. })));

    fs::write(dir.path().join("a.csv"), "date,value\n2024-06-01,1\n").unwrap();
    assert!(matches!(load_scenario(&path), Err(LoadError::Series { .. })), "missing column");

    fs::write(dir.path().join("a.csv"), "date,flow\n2024-06-01,1\n2024-06-03,1\n").unwrap();
    assert!(matches!(load_scenario(&path), Err(LoadError::Series { .. })), "gap in dates");

    fs::write(dir.path().join("a.csv"), "date,flow\n2024-06-02,1\n").unwrap();
    assert!(matches!(load_scenario(&path), Err(LoadError::Series { .. })), "starts late");
}

#[test]
fn plan_round_trip_is_bit_exact_and_bound_to_its_scenario() {
    let l = load_scenario(resolve_scenario_path("tiny")).unwrap();
    let plan = optimize(&l.scenario, &OptimizeOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    export_plan(&plan, &path).unwrap();
    let back = import_plan(&path).unwrap();
    assert_eq!(back.plan, plan);
    assert_eq!(plan_to_string(&back.plan), fs::read_to_string(&path).unwrap());
    assert_eq!(plan_from_str(&plan_to_string(&plan)).unwrap().plan, plan);

    let ok = import_plan_for(&path, &l.scenario).unwrap();
    assert!(resimulate(&ok.plan, &l.scenario).unwrap().feasible);

    let mut other = l.scenario.clone();
    other.weights = CostWeights::new(0.5, 0.0, 0.0);
    assert!(matches!(
        import_plan_for(&path, &other),
        Err(LoadError::DigestMismatch { .. })
    ));
}

#[test]
fn unknown_plan_versions_are_rejected() {
    let l = load_scenario(resolve_scenario_path("tiny")).unwrap();
    let plan = optimize(&l.scenario, &OptimizeOptions::default()).unwrap();
    let text = plan_to_string(&plan).replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
    assert!(plan_from_str(&text).is_err());
}

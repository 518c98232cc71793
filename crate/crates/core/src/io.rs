//! Scenario and plan files.
//!
//! Scenarios are UTF-8 JSON. Any series may be written inline (a number or
//! an array) or as `{"csv": "relative/path.csv", "column": "value"}`; side
//! files are resolved against the scenario's directory and inlined on load,
//! so saving a loaded scenario writes a self-contained file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::demand::DemandProfile;
use crate::impact::SourceSpec;
use crate::network::{simulate, NodeKind, SimulationReport};
use crate::optimizer::AllocationPlan;
use crate::scenario::{CheckReport, Scenario};
use crate::series::{read_daily_table, DailyTable, Series};

/// Environment variable overriding the bundled data directory.
pub const DATA_ENV: &str = "BASIN_ALLOC_DATA";
pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// Directory holding bundled reference data and fixtures.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")),
    }
}

/// Resolves `name` as a path, else as a bundled fixture (with or without the
/// `.scenario` extension).
pub fn resolve_scenario_path(name: &str) -> PathBuf {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return direct;
    }
    let dir = data_dir();
    for candidate in [dir.join(name), dir.join(format!("{name}.scenario"))] {
        if candidate.is_file() {
            return candidate;
        }
    }
    direct
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown fields: {}", .0.join(", "))]
    UnknownFields(Vec<String>),
    #[error("series `{reference}`: {message}")]
    Series { reference: String, message: String },
    #[error("scenario failed validation with {} error(s)", .0.errors.len())]
    Validation(Box<CheckReport>),
    #[error("plan was produced from scenario {expected}, not {found}")]
    DigestMismatch { expected: String, found: String },
}

impl LoadError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        LoadError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(e: &serde_json::Error) -> Self {
        LoadError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Reject unknown fields instead of warning about them.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { strict: true }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    /// Validation outcome; contains warnings and reference identities.
    pub report: CheckReport,
}

/// Loads, resolves and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, LoadError> {
    load_scenario_with(path, LoadOptions::default())
}

pub fn load_scenario_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<LoadedScenario, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
    parse_scenario(&text, path.parent(), opts)
}

/// Parses scenario text. CSV references are resolved against `base_dir`;
/// without one they are rejected.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>, opts: LoadOptions) -> Result<LoadedScenario, LoadError> {
    let scenario = parse_unvalidated(text, base_dir, opts)?;
    let mut report = scenario.0.validate();
    report.warnings.splice(0..0, scenario.1);
    if !report.errors.is_empty() {
        return Err(LoadError::Validation(Box::new(report)));
    }
    Ok(LoadedScenario {
        scenario: scenario.0,
        report,
    })
}

/// Parses and resolves without validating; returns the scenario and any
/// lenient-mode warnings.
pub fn parse_unvalidated(
    text: &str,
    base_dir: Option<&Path>,
    opts: LoadOptions,
) -> Result<(Scenario, Vec<String>), LoadError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| LoadError::parse(&e))?;
    let mut scenario: Scenario = serde_json::from_str(text).map_err(|e| LoadError::parse(&e))?;
    let canonical = serde_json::to_value(&scenario).expect("scenario serialises");
    let mut unknown = Vec::new();
    unknown_fields(&raw, &canonical, "", &mut unknown);
    let mut warnings = Vec::new();
    if !unknown.is_empty() {
        if opts.strict {
            return Err(LoadError::UnknownFields(unknown));
        }
        warnings.extend(unknown.into_iter().map(|f| format!("ignored unknown field `{f}`")));
    }
    resolve_series(&mut scenario, base_dir)?;
    if scenario.network.horizon == 0 {
        scenario.network.horizon = scenario.horizon.days;
    }
    fill_default_sources(&mut scenario)?;
    Ok((scenario, warnings))
}

fn unknown_fields(input: &Value, canonical: &Value, path: &str, out: &mut Vec<String>) {
    match (input, canonical) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(c) => unknown_fields(v, c, &here, out),
                    None if v.is_null() => {}
                    None => out.push(here),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (v, c)) in a.iter().zip(b).enumerate() {
                unknown_fields(v, c, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

const BUNDLED_SOURCES: &str = include_str!("../data/sources.json");

/// Default source specifications: `sources.json` in the data directory when
/// present, otherwise the copy compiled into the library.
pub fn default_sources() -> Result<Vec<SourceSpec>, LoadError> {
    let path = data_dir().join("sources.json");
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BUNDLED_SOURCES.to_owned(),
        Err(e) => return Err(LoadError::io(&path, e)),
    };
    serde_json::from_str(&text).map_err(|e| LoadError::parse(&e))
}

fn fill_default_sources(s: &mut Scenario) -> Result<(), LoadError> {
    let missing = crate::source::SourceKind::ALL
        .iter()
        .any(|k| s.sources.iter().all(|sp| sp.kind != *k));
    if !missing {
        return Ok(());
    }
    for d in default_sources()? {
        if s.sources.iter().all(|sp| sp.kind != d.kind) {
            s.sources.push(d);
        }
    }
    s.sources.sort_by_key(|sp| sp.kind);
    Ok(())
}

struct Resolver<'a> {
    base: Option<&'a Path>,
    horizon_start: NaiveDate,
    cache: BTreeMap<String, DailyTable>,
}

impl Resolver<'_> {
    fn table(&mut self, rel: &str) -> Result<&DailyTable, LoadError> {
        if !self.cache.contains_key(rel) {
            let Some(base) = self.base else {
                return Err(LoadError::Series {
                    reference: rel.to_owned(),
                    message: "CSV references need a scenario directory".into(),
                });
            };
            let path = base.join(rel);
            let file = fs::File::open(&path).map_err(|e| LoadError::io(&path, e))?;
            let table = read_daily_table(file).map_err(|e| LoadError::Series {
                reference: rel.to_owned(),
                message: e.to_string(),
            })?;
            self.cache.insert(rel.to_owned(), table);
        }
        Ok(&self.cache[rel])
    }

    fn column(&mut self, series: &Series) -> Result<Option<(Vec<f64>, NaiveDate)>, LoadError> {
        let Series::File { csv, column } = series else { return Ok(None) };
        let name = column.clone().unwrap_or_else(|| "value".into());
        let table = self.table(csv)?;
        let values = table.column(&name).ok_or_else(|| LoadError::Series {
            reference: csv.clone(),
            message: format!("no column `{name}`"),
        })?;
        Ok(Some((values.to_vec(), table.start)))
    }

    /// Inlines a reference, aligning day 0 with the horizon start.
    fn aligned(&mut self, series: &mut Series) -> Result<(), LoadError> {
        let reference = match series {
            Series::File { csv, .. } => csv.clone(),
            _ => return Ok(()),
        };
        if let Some((values, start)) = self.column(series)? {
            if start > self.horizon_start {
                return Err(LoadError::Series {
                    reference,
                    message: format!("starts {start}, after the horizon start {}", self.horizon_start),
                });
            }
            let offset = (self.horizon_start - start).num_days() as usize;
            *series = Series::Daily(values).shifted(offset);
        }
        Ok(())
    }

    fn aligned_opt(&mut self, series: &mut Option<Series>) -> Result<(), LoadError> {
        match series {
            Some(s) => self.aligned(s),
            None => Ok(()),
        }
    }
}

fn resolve_series(s: &mut Scenario, base: Option<&Path>) -> Result<(), LoadError> {
    let mut r = Resolver {
        base,
        horizon_start: s.horizon.start,
        cache: BTreeMap::new(),
    };
    for n in &mut s.network.nodes {
        if let NodeKind::Source { availability, .. } = &mut n.kind {
            r.aligned_opt(availability)?;
        }
    }
    for l in &mut s.network.links {
        r.aligned_opt(&mut l.capacity)?;
        r.aligned_opt(&mut l.ecological_min)?;
    }
    for sp in &mut s.sources {
        r.aligned_opt(&mut sp.availability)?;
    }
    for u in &mut s.units {
        if let DemandProfile::ForecastSeries {
            start,
            series,
            lower,
            upper,
        } = &mut u.demand
        {
            // Forecasts keep their own dates; the start is recorded.
            let mut table_start = None;
            for part in [Some(series), lower.as_mut(), upper.as_mut()].into_iter().flatten() {
                if let Some((values, st)) = r.column(part)? {
                    if table_start.is_some_and(|t| t != st) {
                        return Err(LoadError::Series {
                            reference: u.id.clone(),
                            message: "forecast bands start on different dates".into(),
                        });
                    }
                    table_start = Some(st);
                    *part = Series::Daily(values);
                }
            }
            if start.is_none() {
                *start = table_start;
            }
        }
    }
    Ok(())
}

/// Self-contained pretty JSON of a scenario, newline-terminated.
pub fn save_scenario(s: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("scenario serialises");
    text.push('\n');
    text
}

pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let path = path.as_ref();
    fs::write(path, save_scenario(s)).map_err(|e| LoadError::io(path, e))
}

/// Serialised plan with its format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub schema_version: u32,
    pub plan: AllocationPlan,
}

pub fn plan_to_string(plan: &AllocationPlan) -> String {
    let file = PlanFile {
        schema_version: PLAN_SCHEMA_VERSION,
        plan: plan.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("plan serialises");
    text.push('\n');
    text
}

pub fn plan_from_str(text: &str) -> Result<PlanFile, LoadError> {
    let file: PlanFile = serde_json::from_str(text).map_err(|e| LoadError::parse(&e))?;
    if file.schema_version != PLAN_SCHEMA_VERSION {
        return Err(LoadError::Parse {
            line: 0,
            column: 0,
            message: format!("plan schema_version {} is not supported", file.schema_version),
        });
    }
    Ok(file)
}

pub fn export_plan(plan: &AllocationPlan, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let path = path.as_ref();
    fs::write(path, plan_to_string(plan)).map_err(|e| LoadError::io(path, e))
}

pub fn import_plan(path: impl AsRef<Path>) -> Result<PlanFile, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
    plan_from_str(&text)
}

/// Imports a plan, refusing it unless it was produced from `scenario`.
pub fn import_plan_for(path: impl AsRef<Path>, scenario: &Scenario) -> Result<PlanFile, LoadError> {
    let file = import_plan(path)?;
    check_digest(&file.plan, scenario)?;
    Ok(file)
}

pub fn check_digest(plan: &AllocationPlan, scenario: &Scenario) -> Result<(), LoadError> {
    let found = scenario.digest();
    if plan.scenario_digest != found {
        return Err(LoadError::DigestMismatch {
            expected: plan.scenario_digest.clone(),
            found,
        });
    }
    Ok(())
}

/// Replays a plan's flows through its scenario's network.
pub fn resimulate(plan: &AllocationPlan, scenario: &Scenario) -> Result<SimulationReport, LoadError> {
    check_digest(plan, scenario)?;
    let net = scenario.network.truncated(plan.horizon.days);
    simulate(&net, &plan.flows).map_err(|e| LoadError::Series {
        reference: "flows".into(),
        message: e.to_string(),
    })
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checks::{consistency_checks, IdentityCheck, ReferenceData};
use crate::demand::{expand_demand, validate_profile, DemandUnit};
use crate::impact::{derive_co2_factor, GridEmissionFactor, SourceSpec};
use crate::network::{validate_network, NetworkModel, NodeKind, Violation};
use crate::quality::{allowed_sources, QualityMatrix};
use crate::series::DateRange;
use crate::source::SourceKind;

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance between a tabulated CO2 factor and its energy-derived value.
pub const CO2_DERIVATION_TOL: f64 = 1e-3;

/// Objective weights, used as given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Squared fractional deficit term.
    pub deficit: f64,
    /// Net economic term (cost minus benefit).
    pub economic: f64,
    /// Emissions term.
    pub co2: f64,
}

impl CostWeights {
    pub fn new(deficit: f64, economic: f64, co2: f64) -> Self {
        CostWeights {
            deficit,
            economic,
            co2,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.deficit, self.economic, self.co2];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(format!("weights must be finite and >= 0, got {all:?}"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err("at least one weight must be positive".into());
        }
        Ok(())
    }
}

/// Scale of the economic (€) and emissions (kg CO2) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub economic_eur: f64,
    pub co2_kg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VolumeUnit {
    #[default]
    #[serde(rename = "hm3")]
    Hm3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFlags {
    /// Strict priority order instead of the weighted objective.
    #[serde(default)]
    pub lexicographic: bool,
    /// Enables all-or-nothing link rules (`min_when_active`).
    #[serde(default)]
    pub binary_rules: bool,
    /// Chord segments per squared-deficit term.
    #[serde(default = "default_segments")]
    pub pwl_segments: usize,
    /// Require tabulated CO2 factors to match density × grid factor.
    #[serde(default = "default_true")]
    pub derived_co2_check: bool,
}

fn default_segments() -> usize {
    8
}

fn default_true() -> bool {
    true
}

impl Default for RuleFlags {
    fn default() -> Self {
        RuleFlags {
            lexicographic: false,
            binary_rules: false,
            pwl_segments: default_segments(),
            derived_co2_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub volume_unit: VolumeUnit,
    pub horizon: DateRange,
    pub network: NetworkModel,
    pub units: Vec<DemandUnit>,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub quality: QualityMatrix,
    pub weights: CostWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizers: Option<Normalizers>,
    #[serde(default)]
    pub grid_emission_factor: GridEmissionFactor,
    #[serde(default)]
    pub rules: RuleFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceData>,
}

/// Aggregated validation outcome of a scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckReport {
    pub errors: Vec<Violation>,
    pub warnings: Vec<String>,
    pub identities: Vec<IdentityCheck>,
}

impl CheckReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty() && self.identities.iter().all(|c| c.passed)
    }

    fn error(&mut self, code: &str, message: String) {
        self.errors.push(Violation {
            code: code.to_owned(),
            message,
        });
    }
}

impl Scenario {
    pub fn spec(&self, kind: SourceKind) -> Option<&SourceSpec> {
        self.sources.iter().find(|s| s.kind == kind)
    }

    pub fn unit(&self, id: &str) -> Option<&DemandUnit> {
        self.units.iter().find(|u| u.id == id)
    }

    /// Demand node id for each unit id.
    pub fn unit_nodes(&self) -> BTreeMap<&str, &str> {
        self.network
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Demand { unit } => Some((unit.as_str(), n.id.as_str())),
                _ => None,
            })
            .collect()
    }

    /// Daily demand of every unit over the horizon.
    pub fn demands(&self) -> Result<BTreeMap<String, Vec<f64>>, crate::demand::DemandError> {
        self.units
            .iter()
            .map(|u| Ok((u.id.clone(), expand_demand(u, &self.horizon)?)))
            .collect()
    }

    /// Same scenario over its first `days` days.
    pub fn with_horizon_days(&self, days: usize) -> Scenario {
        let mut s = self.clone();
        s.horizon = self.horizon.truncated(days);
        s.network = self.network.truncated(days);
        s
    }

    /// Hex SHA-256 of the canonical serialisation.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> CheckReport {
        let mut r = CheckReport::default();
        if self.schema_version != SCHEMA_VERSION {
            r.error(
                "schema version",
                format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        if self.network.horizon != self.horizon.days {
            r.error(
                "horizon",
                format!("network horizon {} differs from scenario horizon {}", self.network.horizon, self.horizon.days),
            );
        }
        r.errors.extend(validate_network(&self.network).violations);

        let mut ids = BTreeSet::new();
        for u in &self.units {
            if u.id.is_empty() || !ids.insert(u.id.as_str()) {
                r.error("unit id", format!("unit id `{}` is empty or repeated", u.id));
            }
            if let Err(e) = validate_profile(u) {
                r.error("demand profile", e.to_string());
            } else if let Err(e) = expand_demand(u, &self.horizon) {
                r.error("demand coverage", e.to_string());
            }
            if let Err(e) = u.benefit.validate() {
                r.error("benefit", format!("unit `{}`: {e}", u.id));
            }
            if u.priority_rank == Some(0) {
                r.error("priority", format!("unit `{}`: priority rank starts at 1", u.id));
            }
            if !u.emission_factor.is_finite() {
                r.error("emission factor", format!("unit `{}`: emission factor not finite", u.id));
            }
            match allowed_sources(u, &self.quality) {
                Err(e) => r.error("quality", format!("unit `{}`: {e}", u.id)),
                Ok(allowed) => {
                    let strict = QualityMatrix::default().rows.remove(&u.kind).unwrap_or_default();
                    for k in allowed.difference(&strict) {
                        r.warnings.push(format!(
                            "unit `{}` ({}) may use {k}, which the strict default rules forbid",
                            u.id, u.kind
                        ));
                    }
                }
            }
        }
        let mut referenced = BTreeMap::<&str, usize>::new();
        for n in &self.network.nodes {
            if let NodeKind::Demand { unit } = &n.kind {
                *referenced.entry(unit.as_str()).or_default() += 1;
                if !ids.contains(unit.as_str()) {
                    r.error("demand reference", format!("demand node `{}` names unknown unit `{unit}`", n.id));
                }
            }
        }
        for u in &self.units {
            match referenced.get(u.id.as_str()) {
                None => r.error("demand reference", format!("unit `{}` has no demand node", u.id)),
                Some(&c) if c > 1 => r.error("demand reference", format!("unit `{}` has {c} demand nodes", u.id)),
                _ => {}
            }
        }

        let mut kinds = BTreeSet::new();
        for s in &self.sources {
            if !kinds.insert(s.kind) {
                r.error("source spec", format!("{} specified twice", s.kind));
            }
            let fine = |v: f64| v.is_finite() && v >= 0.0;
            if !fine(s.energy_density) || !fine(s.cost_per_m3) || s.co2_per_m3.is_some_and(|c| !c.is_finite()) {
                r.error("source spec", format!("{}: density and cost must be finite and >= 0", s.kind));
            }
            if s.rights_cap.is_some_and(|c| !fine(c)) {
                r.error("source spec", format!("{}: rights cap must be >= 0", s.kind));
            }
            if let Some(a) = &s.availability {
                if !a.covers(self.horizon.days) || !a.all(self.horizon.days, fine) {
                    r.error("source spec", format!("{}: availability must cover the horizon with values >= 0", s.kind));
                }
            }
            if self.rules.derived_co2_check {
                if let Some(given) = s.co2_per_m3 {
                    let derived = derive_co2_factor(s.energy_density, self.grid_emission_factor);
                    if (given - derived).abs() > CO2_DERIVATION_TOL {
                        r.error(
                            "co2 derivation",
                            format!("{}: factor {given} differs from {derived} derived from energy density", s.kind),
                        );
                    }
                }
            }
        }
        for n in &self.network.nodes {
            if let NodeKind::Source { source_kind, .. } = n.kind {
                if !kinds.contains(&source_kind) {
                    r.error("source spec", format!("source `{}` is {source_kind}, which has no specification", n.id));
                }
            }
        }

        if let Err(e) = self.weights.validate() {
            r.error("weights", e);
        }
        if let Some(n) = &self.normalizers {
            if !(n.economic_eur > 0.0 && n.co2_kg > 0.0 && n.economic_eur.is_finite() && n.co2_kg.is_finite()) {
                r.error("normalizers", "normalizers must be positive and finite".into());
            }
        }
        if !(self.grid_emission_factor.0 > 0.0) {
            r.error("grid emission factor", "grid emission factor must be positive".into());
        }
        if self.rules.pwl_segments == 0 {
            r.error("segments", "at least one chord segment is required".into());
        }
        if !self.rules.binary_rules && self.network.links.iter().any(|l| l.min_when_active.is_some()) {
            r.warnings
                .push("links declare min_when_active but binary rules are disabled; thresholds are ignored".into());
        }
        r.identities = consistency_checks(self.reference.as_ref());
        r
    }
}

use std::collections::BTreeMap;

use basin_lp::Pwl;
use serde::{Deserialize, Serialize};

use crate::demand::DemandUnit;
use crate::series::Series;
use crate::source::SourceKind;
use crate::units::{hm3_to_m3, kg_to_t};

/// Supplied volume, hm³ per day, indexed unit → source kind → day.
pub type SupplyTensor = BTreeMap<String, BTreeMap<SourceKind, Vec<f64>>>;

/// kg CO2 per kWh of electricity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridEmissionFactor(pub f64);

impl Default for GridEmissionFactor {
    fn default() -> Self {
        GridEmissionFactor(0.354)
    }
}

/// Generation characteristics of one source kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// kWh per m³.
    pub energy_density: f64,
    /// kg CO2 per m³; derived from the energy density when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co2_per_m3: Option<f64>,
    /// € per m³.
    pub cost_per_m3: f64,
    /// Legal extraction limit over the planning horizon, hm³.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rights_cap: Option<f64>,
    /// Basin-wide daily generation limit, hm³/day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<Series>,
}

impl SourceSpec {
    pub fn co2_factor(&self, grid: GridEmissionFactor) -> f64 {
        self.co2_per_m3
            .unwrap_or_else(|| derive_co2_factor(self.energy_density, grid))
    }
}

pub fn derive_co2_factor(energy_density: f64, grid: GridEmissionFactor) -> f64 {
    energy_density * grid.0
}

/// Economic benefit of the volume a unit receives over the horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Benefit {
    #[default]
    None,
    /// Constant value per m³.
    Linear { eur_per_m3: f64 },
    /// Concave nondecreasing curve from total hm³ to €, starting at 0 hm³.
    Curve { points: Vec<(f64, f64)> },
}

impl Benefit {
    pub fn curve(&self) -> Option<Result<Pwl, basin_lp::LpError>> {
        match self {
            Benefit::Curve { points } => Some(Pwl::new(points.clone())),
            _ => None,
        }
    }

    /// Checks the curve's shape; `Ok` for the other variants.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Benefit::None => Ok(()),
            Benefit::Linear { eur_per_m3 } if eur_per_m3.is_finite() => Ok(()),
            Benefit::Linear { eur_per_m3 } => Err(format!("benefit rate {eur_per_m3} is not finite")),
            Benefit::Curve { .. } => {
                let c = self.curve().expect("curve variant").map_err(|e| e.to_string())?;
                if c.domain().0 != 0.0 {
                    return Err("benefit curve must start at 0 hm³".into());
                }
                if !c.is_nondecreasing() || !c.is_concave(1e-12) {
                    return Err("benefit curve must be concave and nondecreasing".into());
                }
                Ok(())
            }
        }
    }

    /// Benefit (€) of `total_hm3`; the flag is set when the volume lies past
    /// the curve's domain and was clamped.
    pub fn value(&self, total_hm3: f64) -> (f64, bool) {
        match self {
            Benefit::None => (0.0, false),
            Benefit::Linear { eur_per_m3 } => (hm3_to_m3(total_hm3) * eur_per_m3, false),
            Benefit::Curve { .. } => match self.curve() {
                Some(Ok(c)) => c.eval_clamped(total_hm3),
                _ => (0.0, false),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImpactError {
    #[error("no source specification for {0}")]
    MissingSpec(SourceKind),
}

fn volume_by_kind(supply: &SupplyTensor) -> BTreeMap<SourceKind, f64> {
    let mut out = BTreeMap::new();
    for by_kind in supply.values() {
        for (&k, series) in by_kind {
            *out.entry(k).or_insert(0.0) += series.iter().sum::<f64>();
        }
    }
    out
}

fn spec_for(specs: &[SourceSpec], kind: SourceKind) -> Option<&SourceSpec> {
    specs.iter().find(|s| s.kind == kind)
}

/// Generation emissions per source kind, kg CO2.
pub fn source_co2(
    supply: &SupplyTensor,
    specs: &[SourceSpec],
    grid: GridEmissionFactor,
) -> Result<BTreeMap<SourceKind, f64>, ImpactError> {
    volume_by_kind(supply)
        .into_iter()
        .map(|(k, v)| match spec_for(specs, k) {
            Some(s) => Ok((k, hm3_to_m3(v) * s.co2_factor(grid))),
            None if v == 0.0 => Ok((k, 0.0)),
            None => Err(ImpactError::MissingSpec(k)),
        })
        .collect()
}

/// Activity emissions per unit, kg CO2. Units absent from `supply` get 0.
pub fn demand_co2(supply: &SupplyTensor, units: &[DemandUnit]) -> BTreeMap<String, f64> {
    units
        .iter()
        .map(|u| {
            let v: f64 = supply
                .get(&u.id)
                .map_or(0.0, |m| m.values().flat_map(|s| s.iter()).sum());
            (u.id.clone(), hm3_to_m3(v) * u.emission_factor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicSummary {
    pub cost_eur: f64,
    pub benefit_eur: f64,
    pub net_eur: f64,
    pub cost_by_source_eur: BTreeMap<SourceKind, f64>,
    pub benefit_by_unit_eur: BTreeMap<String, f64>,
    /// Units whose supply exceeded their benefit curve's domain.
    pub clamped_units: Vec<String>,
}

pub fn economic_impact(
    supply: &SupplyTensor,
    specs: &[SourceSpec],
    units: &[DemandUnit],
) -> Result<EconomicSummary, ImpactError> {
    let mut cost_by_source_eur = BTreeMap::new();
    for (k, v) in volume_by_kind(supply) {
        let price = match spec_for(specs, k) {
            Some(s) => s.cost_per_m3,
            None if v == 0.0 => 0.0,
            None => return Err(ImpactError::MissingSpec(k)),
        };
        cost_by_source_eur.insert(k, hm3_to_m3(v) * price);
    }
    let mut benefit_by_unit_eur = BTreeMap::new();
    let mut clamped_units = Vec::new();
    for u in units {
        let total: f64 = supply
            .get(&u.id)
            .map_or(0.0, |m| m.values().flat_map(|s| s.iter()).sum());
        let (b, clamped) = u.benefit.value(total);
        if clamped {
            log::warn!("unit `{}`: supply {total} hm³ past its benefit curve; clamped", u.id);
            clamped_units.push(u.id.clone());
        }
        benefit_by_unit_eur.insert(u.id.clone(), b);
    }
    let cost_eur: f64 = cost_by_source_eur.values().sum();
    let benefit_eur: f64 = benefit_by_unit_eur.values().sum();
    Ok(EconomicSummary {
        cost_eur,
        benefit_eur,
        net_eur: benefit_eur - cost_eur,
        cost_by_source_eur,
        benefit_by_unit_eur,
        clamped_units,
    })
}

/// Emissions (t CO2eq) and economics (€) of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    /// Generation plus activity emissions.
    pub co2_total: f64,
    /// Activity emissions of each unit.
    pub co2_by_unit: BTreeMap<String, f64>,
    /// Generation emissions of each source kind.
    pub co2_by_source: BTreeMap<SourceKind, f64>,
    pub economic_cost: f64,
    pub economic_benefit: f64,
    pub net_economic: f64,
    pub cost_by_source: BTreeMap<SourceKind, f64>,
    pub benefit_by_unit: BTreeMap<String, f64>,
    /// Total supplied volume per source kind, hm³.
    pub supply_by_source: BTreeMap<SourceKind, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn impact_report(
    supply: &SupplyTensor,
    specs: &[SourceSpec],
    units: &[DemandUnit],
    grid: GridEmissionFactor,
) -> Result<ImpactReport, ImpactError> {
    let by_source: BTreeMap<SourceKind, f64> = source_co2(supply, specs, grid)?
        .into_iter()
        .map(|(k, kg)| (k, kg_to_t(kg)))
        .collect();
    let by_unit: BTreeMap<String, f64> = demand_co2(supply, units)
        .into_iter()
        .map(|(u, kg)| (u, kg_to_t(kg)))
        .collect();
    let econ = economic_impact(supply, specs, units)?;
    let co2_total = by_source.values().sum::<f64>() + by_unit.values().sum::<f64>();
    let warnings = econ
        .clamped_units
        .iter()
        .map(|u| format!("unit `{u}`: supply exceeds benefit curve domain; benefit clamped"))
        .collect();
    Ok(ImpactReport {
        co2_total,
        co2_by_unit: by_unit,
        co2_by_source: by_source,
        economic_cost: econ.cost_eur,
        economic_benefit: econ.benefit_eur,
        net_economic: econ.net_eur,
        cost_by_source: econ.cost_by_source_eur,
        benefit_by_unit: econ.benefit_by_unit_eur,
        supply_by_source: volume_by_kind(supply),
        warnings,
    })
}

use std::collections::BTreeSet;
use std::fmt;
use std::io;

use chrono::{Datelike, NaiveDate};
use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::impact::Benefit;
use crate::series::{days_in_month, days_in_year, read_daily_table, DateRange, Series};
use crate::source::SourceKind;
use crate::units::{m3_to_hm3, m3_to_hm3_in};

/// Golf-course irrigation allowance, m³ per hectare per year.
pub const GOLF_M3_PER_HA: f64 = 8000.0;

const FRACTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DemandKind {
    /// Urban.
    UDU,
    /// Agricultural.
    ADU,
    /// Industrial.
    IDU,
    /// Service and recreational.
    SDU,
    /// Wetland maintenance; a hard constraint rather than a demand.
    WDU,
}

impl DemandKind {
    pub const ALL: [DemandKind; 5] = [
        DemandKind::UDU,
        DemandKind::ADU,
        DemandKind::IDU,
        DemandKind::SDU,
        DemandKind::WDU,
    ];

    /// Default priority rank, 1 being the highest. Wetlands have none.
    pub fn default_priority(self) -> Option<u32> {
        match self {
            DemandKind::UDU => Some(1),
            DemandKind::ADU => Some(2),
            DemandKind::IDU => Some(3),
            DemandKind::SDU => Some(4),
            DemandKind::WDU => None,
        }
    }

    pub fn is_wetland(self) -> bool {
        self == DemandKind::WDU
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DemandKind::UDU => "UDU",
            DemandKind::ADU => "ADU",
            DemandKind::IDU => "IDU",
            DemandKind::SDU => "SDU",
            DemandKind::WDU => "WDU",
        }
    }
}

impl fmt::Display for DemandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DemandKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DemandKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown demand kind `{s}`"))
    }
}

/// How a unit's demand is distributed over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DemandProfile {
    /// `total` hm³/year spread evenly over the days of each year.
    AnnualUniform { total: f64 },
    /// `total` hm³/year split by month, then evenly within each month.
    MonthlyCurve { total: f64, fractions: [f64; 12] },
    /// Central daily forecast (hm³/day) with uncertainty bands. `start` is
    /// the date of the first entry; when absent the series starts on the
    /// first horizon day.
    ForecastSeries {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<NaiveDate>,
        series: Series,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<Series>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Series>,
    },
}

impl DemandProfile {
    /// Declared annual volume, when the profile has one.
    pub fn annual_total(&self) -> Option<f64> {
        match self {
            DemandProfile::AnnualUniform { total } | DemandProfile::MonthlyCurve { total, .. } => {
                Some(*total)
            }
            DemandProfile::ForecastSeries { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandUnit {
    pub id: String,
    pub kind: DemandKind,
    /// Overrides the kind's default rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_rank: Option<u32>,
    pub demand: DemandProfile,
    /// kg CO2 per m³ supplied; negative for absorbing wetlands.
    #[serde(default)]
    pub emission_factor: f64,
    #[serde(default)]
    pub benefit: Benefit,
    /// Replaces the quality-matrix row for this unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_kinds: Option<BTreeSet<SourceKind>>,
}

impl DemandUnit {
    pub fn new(id: impl Into<String>, kind: DemandKind, demand: DemandProfile) -> Self {
        DemandUnit {
            id: id.into(),
            kind,
            priority_rank: None,
            demand,
            emission_factor: 0.0,
            benefit: Benefit::None,
            allowed_kinds: None,
        }
    }

    pub fn priority(&self) -> Option<u32> {
        if self.kind.is_wetland() {
            None
        } else {
            self.priority_rank.or(self.kind.default_priority())
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemandError {
    #[error("unit `{unit}`: forecast covers {available} days from the horizon start, {needed} needed")]
    ForecastTooShort {
        unit: String,
        available: usize,
        needed: usize,
    },
    #[error("unit `{unit}`: forecast starts {start}, after the horizon start {horizon}")]
    ForecastStartsLate {
        unit: String,
        start: NaiveDate,
        horizon: NaiveDate,
    },
    #[error("unit `{unit}`: {message}")]
    Profile { unit: String, message: String },
    #[error("negative area {0} ha")]
    NegativeArea(f64),
    #[error("demand has {demand} months, supply {supply}")]
    LengthMismatch { demand: usize, supply: usize },
    #[error("month {0}: demand must be positive")]
    NonPositiveDemand(usize),
    #[error("empty horizon")]
    EmptyHorizon,
}

/// Checks profile-level invariants: fractions, bands, non-negativity.
pub fn validate_profile(unit: &DemandUnit) -> Result<(), DemandError> {
    let bad = |message: String| DemandError::Profile {
        unit: unit.id.clone(),
        message,
    };
    match &unit.demand {
        DemandProfile::AnnualUniform { total } => {
            if !(total.is_finite() && *total >= 0.0) {
                return Err(bad(format!("annual total {total} must be finite and >= 0")));
            }
        }
        DemandProfile::MonthlyCurve { total, fractions } => {
            if !(total.is_finite() && *total >= 0.0) {
                return Err(bad(format!("annual total {total} must be finite and >= 0")));
            }
            if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
                return Err(bad("monthly fractions must be >= 0".into()));
            }
            let sum: f64 = fractions.iter().sum();
            if (sum - 1.0).abs() > FRACTION_TOL {
                return Err(bad(format!("monthly fractions sum to {sum}, not 1")));
            }
        }
        DemandProfile::ForecastSeries {
            series,
            lower,
            upper,
            ..
        } => {
            for s in [Some(series), lower.as_ref(), upper.as_ref()].into_iter().flatten() {
                if !s.is_resolved() {
                    return Err(bad("forecast series reference was not resolved".into()));
                }
            }
            let n = series.len().unwrap_or(1);
            for t in 0..n {
                let c = series.at(t);
                if !(c.is_finite() && c >= 0.0) {
                    return Err(bad(format!("day {t}: forecast {c} must be finite and >= 0")));
                }
                let lo = lower.as_ref().map_or(c, |s| band_at(s, t, c));
                let hi = upper.as_ref().map_or(c, |s| band_at(s, t, c));
                if !(lo <= c && c <= hi) {
                    return Err(bad(format!("day {t}: band [{lo}, {hi}] does not contain {c}")));
                }
            }
        }
    }
    Ok(())
}

fn band_at(s: &Series, t: usize, fallback: f64) -> f64 {
    match s.len() {
        Some(n) if t >= n => fallback,
        _ => s.at(t),
    }
}

/// Daily demand (hm³/day) of `unit` over `horizon`.
pub fn expand_demand(unit: &DemandUnit, horizon: &DateRange) -> Result<Vec<f64>, DemandError> {
    if horizon.days == 0 {
        return Err(DemandError::EmptyHorizon);
    }
    match &unit.demand {
        DemandProfile::AnnualUniform { total } if unit.kind.is_wetland() => {
            Ok(wetland_demand(horizon, *total))
        }
        DemandProfile::AnnualUniform { total } => Ok(horizon
            .dates()
            .map(|d| total / f64::from(days_in_year(d.year())))
            .collect()),
        DemandProfile::MonthlyCurve { total, fractions } => Ok(horizon
            .dates()
            .map(|d| total * fractions[d.month0() as usize] / f64::from(days_in_month(d)))
            .collect()),
        DemandProfile::ForecastSeries { start, series, .. } => {
            let offset = forecast_offset(unit, *start, horizon)?;
            let available = series.len().map_or(usize::MAX, |n| n.saturating_sub(offset));
            if !series.is_resolved() || available < horizon.days {
                return Err(DemandError::ForecastTooShort {
                    unit: unit.id.clone(),
                    available: if series.is_resolved() { available } else { 0 },
                    needed: horizon.days,
                });
            }
            Ok((0..horizon.days).map(|t| series.at(offset + t)).collect())
        }
    }
}

/// Lower and upper forecast bands over the horizon; `None` unless the
/// profile is a forecast. Missing bands equal the central series.
pub fn demand_bands(
    unit: &DemandUnit,
    horizon: &DateRange,
) -> Result<Option<(Vec<f64>, Vec<f64>)>, DemandError> {
    let DemandProfile::ForecastSeries {
        start, lower, upper, ..
    } = &unit.demand
    else {
        return Ok(None);
    };
    let central = expand_demand(unit, horizon)?;
    let offset = forecast_offset(unit, *start, horizon)?;
    let band = |b: &Option<Series>| -> Vec<f64> {
        central
            .iter()
            .enumerate()
            .map(|(t, &c)| b.as_ref().map_or(c, |s| band_at(s, offset + t, c)))
            .collect()
    };
    Ok(Some((band(lower), band(upper))))
}

fn forecast_offset(
    unit: &DemandUnit,
    start: Option<NaiveDate>,
    horizon: &DateRange,
) -> Result<usize, DemandError> {
    match start {
        None => Ok(0),
        Some(s) if s > horizon.start => Err(DemandError::ForecastStartsLate {
            unit: unit.id.clone(),
            start: s,
            horizon: horizon.start,
        }),
        Some(s) => Ok((horizon.start - s).num_days() as usize),
    }
}

/// Annual golf irrigation demand (hm³/year) for `area_ha` hectares.
pub fn sdu_golf_demand(area_ha: f64) -> Result<f64, DemandError> {
    if !(area_ha >= 0.0) {
        return Err(DemandError::NegativeArea(area_ha));
    }
    Ok(m3_to_hm3(area_ha * GOLF_M3_PER_HA))
}

/// [`sdu_golf_demand`] over any numeric type; exact for rationals.
pub fn sdu_golf_demand_in<T: Num + FromPrimitive + PartialOrd + Copy>(area_ha: T) -> Option<T> {
    if area_ha < T::zero() {
        return None;
    }
    Some(m3_to_hm3_in(area_ha * T::from_u32(8000)?))
}

/// Uniform daily proration of a wetland's annual requirement (always /365).
pub fn wetland_demand(horizon: &DateRange, annual_total: f64) -> Vec<f64> {
    vec![annual_total / 365.0; horizon.days]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionReport {
    /// Deficit as a fraction of that month's demand.
    pub monthly_deficit: Vec<f64>,
    /// Worst cumulative deficit over any 120 consecutive months (or all data
    /// when shorter), as a fraction of the mean annual demand of the window.
    pub cumulative_deficit: f64,
    /// Months covered by the cumulative window; below 120 the rule is only a
    /// partial check.
    pub window_months: usize,
    pub monthly_ok: bool,
    pub cumulative_ok: bool,
    pub satisfied: bool,
}

pub const URBAN_MONTHLY_LIMIT: f64 = 0.10;
pub const URBAN_CUMULATIVE_LIMIT: f64 = 0.08;
const URBAN_WINDOW_MONTHS: usize = 120;
const RULE_TOL: f64 = 1e-12;

/// Evaluates the statutory urban guarantee on aligned monthly series.
pub fn urban_satisfaction(demand: &[f64], supply: &[f64]) -> Result<SatisfactionReport, DemandError> {
    if demand.len() != supply.len() {
        return Err(DemandError::LengthMismatch {
            demand: demand.len(),
            supply: supply.len(),
        });
    }
    if let Some(m) = demand.iter().position(|&d| !(d > 0.0)) {
        return Err(DemandError::NonPositiveDemand(m));
    }
    let deficit: Vec<f64> = demand
        .iter()
        .zip(supply)
        .map(|(&d, &s)| (d - s).max(0.0))
        .collect();
    let monthly_deficit: Vec<f64> = deficit.iter().zip(demand).map(|(x, d)| x / d).collect();
    let n = demand.len();
    let window = n.min(URBAN_WINDOW_MONTHS);
    let mut cumulative_deficit: f64 = 0.0;
    if window > 0 {
        for start in 0..=(n - window) {
            let def: f64 = deficit[start..start + window].iter().sum();
            let dem: f64 = demand[start..start + window].iter().sum();
            let annual = dem * 12.0 / window as f64;
            cumulative_deficit = cumulative_deficit.max(def / annual);
        }
    }
    let monthly_ok = monthly_deficit
        .iter()
        .all(|&f| f <= URBAN_MONTHLY_LIMIT + RULE_TOL);
    let cumulative_ok = cumulative_deficit <= URBAN_CUMULATIVE_LIMIT + RULE_TOL;
    Ok(SatisfactionReport {
        monthly_deficit,
        cumulative_deficit,
        window_months: window,
        monthly_ok,
        cumulative_ok,
        satisfied: monthly_ok && cumulative_ok,
    })
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ForecastError {
    #[error(transparent)]
    Table(#[from] crate::series::TableError),
    #[error("missing `value` column")]
    MissingValue,
    #[error("day {day}: band [{lower}, {upper}] does not contain {value}")]
    BandInversion {
        day: usize,
        lower: f64,
        value: f64,
        upper: f64,
    },
    #[error("day {day}: negative demand {value}")]
    Negative { day: usize, value: f64 },
}

/// Parses a `date,value[,lower,upper]` table (hm³/day) into a forecast
/// profile. Missing bands collapse onto the central series.
pub fn ingest_forecast<R: io::Read>(reader: R) -> Result<DemandProfile, ForecastError> {
    let table = read_daily_table(reader)?;
    let value = table.column("value").ok_or(ForecastError::MissingValue)?.to_vec();
    let lower = table.column("lower").map_or_else(|| value.clone(), <[f64]>::to_vec);
    let upper = table.column("upper").map_or_else(|| value.clone(), <[f64]>::to_vec);
    for day in 0..value.len() {
        let (lo, v, hi) = (lower[day], value[day], upper[day]);
        if v < 0.0 {
            return Err(ForecastError::Negative { day, value: v });
        }
        if !(lo <= v && v <= hi) {
            return Err(ForecastError::BandInversion {
                day,
                lower: lo,
                value: v,
                upper: hi,
            });
        }
    }
    Ok(DemandProfile::ForecastSeries {
        start: Some(table.start),
        series: Series::Daily(value),
        lower: Some(Series::Daily(lower)),
        upper: Some(Series::Daily(upper)),
    })
}

//! Additive identities of the reference tables bundled with a scenario.

use serde::{Deserialize, Serialize};

use crate::demand::GOLF_M3_PER_HA;
use crate::exact::{from_decimal, to_f64, Exact};
use crate::units::M3_PER_HM3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedVolume {
    pub name: String,
    pub hm3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GolfReference {
    pub area_ha: f64,
    #[serde(default = "default_golf_rate")]
    pub m3_per_ha: f64,
    /// Declared annual demand, hm³.
    pub hm3_per_year: f64,
}

fn default_golf_rate() -> f64 {
    GOLF_M3_PER_HA
}

/// Published aggregates a scenario was derived from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceData {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resources: Vec<NamedVolume>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demands: Vec<NamedVolume>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demands_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golf: Option<GolfReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    /// `actual - expected`, computed exactly.
    pub residual: f64,
    pub passed: bool,
}

fn exact(v: f64, what: &str) -> Result<Exact, String> {
    from_decimal(v).ok_or_else(|| format!("{what}: {v} is not a finite decimal"))
}

fn identity(name: &str, parts: &[f64], expected: f64) -> IdentityCheck {
    let computed = parts
        .iter()
        .map(|&p| exact(p, name))
        .sum::<Result<Exact, String>>()
        .and_then(|sum| Ok((sum, exact(expected, name)?)));
    match computed {
        Ok((sum, want)) => IdentityCheck {
            name: name.to_owned(),
            expected,
            actual: to_f64(sum),
            residual: to_f64(sum - want),
            passed: sum == want,
        },
        Err(_) => IdentityCheck {
            name: name.to_owned(),
            expected,
            actual: f64::NAN,
            residual: f64::NAN,
            passed: false,
        },
    }
}

/// Exact-arithmetic identities over `reference`; an empty reference passes
/// vacuously.
pub fn consistency_checks(reference: Option<&ReferenceData>) -> Vec<IdentityCheck> {
    let Some(r) = reference else { return Vec::new() };
    let mut out = Vec::new();
    if let Some(total) = r.resources_total {
        let parts: Vec<f64> = r.resources.iter().map(|v| v.hm3).collect();
        out.push(identity("resources total", &parts, total));
    }
    if let Some(total) = r.demands_total {
        let parts: Vec<f64> = r.demands.iter().map(|v| v.hm3).collect();
        out.push(identity("demands total", &parts, total));
    }
    if let Some(g) = &r.golf {
        let check = (|| {
            let vol = exact(g.area_ha, "golf area")? * exact(g.m3_per_ha, "golf rate")?;
            let hm3 = vol / Exact::from_integer(M3_PER_HM3 as i128);
            Ok::<_, String>((hm3, exact(g.hm3_per_year, "golf demand")?))
        })();
        out.push(match check {
            Ok((got, want)) => IdentityCheck {
                name: "golf demand".into(),
                expected: g.hm3_per_year,
                actual: to_f64(got),
                residual: to_f64(got - want),
                passed: got == want,
            },
            Err(_) => IdentityCheck {
                name: "golf demand".into(),
                expected: g.hm3_per_year,
                actual: f64::NAN,
                residual: f64::NAN,
                passed: false,
            },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(v: &[f64]) -> Vec<NamedVolume> {
        v.iter()
            .enumerate()
            .map(|(i, &hm3)| NamedVolume { name: format!("r{i}"), hm3 })
            .collect()
    }

    #[test]
    fn identities_hold_exactly_and_flag_perturbation() {
        let mut r = ReferenceData {
            resources: named(&[764.0, 312.0, 302.0, 263.0, 81.0]),
            resources_total: Some(1722.0),
            demands: named(&[1476.3, 200.9, 11.2, 8.5]),
            demands_total: Some(1696.9),
            golf: Some(GolfReference { area_ha: 1400.0, m3_per_ha: 8000.0, hm3_per_year: 11.2 }),
        };
        let checks = consistency_checks(Some(&r));
        assert_eq!(checks.len(), 3);
        assert!(checks.iter().all(|c| c.passed && c.residual == 0.0), "{checks:?}");

        r.resources[0].hm3 = 765.0;
        let bad = consistency_checks(Some(&r));
        assert!(!bad[0].passed);
        assert_eq!(bad[0].residual, 1.0);
        assert!(bad[1].passed);
    }

    #[test]
    fn empty_reference_is_vacuous() {
        assert!(consistency_checks(None).is_empty());
        assert!(consistency_checks(Some(&ReferenceData::default())).is_empty());
    }
}

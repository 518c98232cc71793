//! Exact decimal arithmetic for reference-table identities.
//!
//! Table values are decimals; parsing their shortest `f64` representation
//! into a rational makes sums such as `1476.3 + 200.9 + 11.2 + 8.5` exact.

use num_rational::Ratio;

pub type Exact = Ratio<i128>;

/// Converts `v` to the rational with the same shortest decimal spelling.
pub fn from_decimal(v: f64) -> Option<Exact> {
    if !v.is_finite() {
        return None;
    }
    let s = format!("{v}");
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.as_str()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if frac.len() > 30 {
        return None;
    }
    let denom = 10i128.checked_pow(u32::try_from(frac.len()).ok()?)?;
    let numer: i128 = format!("{int}{frac}").parse().ok()?;
    let r = Ratio::new(numer, denom);
    Some(if neg { -r } else { r })
}

pub fn to_f64(r: Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

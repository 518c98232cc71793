//! Volume units. Everything inside the crate is hm³ (volumes) and hm³/day (rates).

use num_traits::{FromPrimitive, Num};

pub const M3_PER_HM3: f64 = 1.0e6;

pub fn m3_to_hm3(m3: f64) -> f64 {
    m3 / M3_PER_HM3
}

pub fn hm3_to_m3(hm3: f64) -> f64 {
    hm3 * M3_PER_HM3
}

/// `m³` to `hm³` over any numeric type, exact for rationals.
pub fn m3_to_hm3_in<T: Num + FromPrimitive>(m3: T) -> T {
    m3 / T::from_u32(1_000_000).expect("10^6 representable")
}

/// Kilograms to tonnes.
pub fn kg_to_t(kg: f64) -> f64 {
    kg / 1000.0
}

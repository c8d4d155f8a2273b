//! Unit conversions between the public (ordinary-frequency) units and the
//! internal angular units.

use std::f64::consts::TAU;

/// kHz (ordinary) to rad/µs.
#[inline]
pub fn khz_to_rad_per_us(f_khz: f64) -> f64 {
    TAU * f_khz * 1e-3
}

/// MHz (ordinary) to rad/µs.
#[inline]
pub fn mhz_to_rad_per_us(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

/// MHz (ordinary) to rad/s.
#[inline]
pub fn mhz_to_rad_per_s(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e6
}

/// rad/s to kHz (ordinary).
#[inline]
pub fn rad_per_s_to_khz(w: f64) -> f64 {
    w / (TAU * 1e3)
}

/// A rate in 1/s expressed per µs.
#[inline]
pub fn per_s_to_per_us(rate: f64) -> f64 {
    rate * 1e-6
}

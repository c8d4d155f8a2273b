//! Special functions used by the measurement models.

use std::f64::consts::{FRAC_PI_4, PI};

/// First positive zero of J₀.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Bessel function of the first kind, order zero.
///
/// Power series for |x| ≤ 12, Hankel asymptotic expansion beyond. Absolute
/// error is below 1e-12 on the whole real line.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= q / (kf * kf);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && kf > 0.5 * x {
                break;
            }
        }
        sum
    } else {
        // Hankel expansion: J0 = sqrt(2/(πx)) (P cos χ − Q sin χ), χ = x − π/4.
        let z = 8.0 * x;
        let mut p = 1.0;
        let mut q = 0.0;
        let mut term = 1.0;
        // Coefficients a_k = (1² · 3² · ... (2k−1)²) / (k! 8^k)
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let m = (2 * k - 1) as f64;
            term *= m * m / (k as f64 * z);
            // asymptotic series: stop at the smallest term
            if term.abs() < 1e-18 || term.abs() > prev {
                break;
            }
            prev = term.abs();
            match k % 4 {
                1 => q -= term,
                2 => p -= term,
                3 => q += term,
                _ => p += term,
            }
        }
        let chi = x - FRAC_PI_4;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Generalized Laguerre polynomial L^α_n(x) by the three-term recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut l_prev = 1.0;
    if n == 0 {
        return l_prev;
    }
    let mut l = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * l - (kf + alpha) * l_prev) / (kf + 1.0);
        l_prev = l;
        l = next;
    }
    l
}

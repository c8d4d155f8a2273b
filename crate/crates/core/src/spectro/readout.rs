//! Brute-force simulation of the two-ion preparation and readout sequence:
//! a red-sideband pulse loads two quanta into mode w, a repump resets the
//! spins and dephases the motion, the modes exchange, and a second
//! red-sideband pulse maps the analyzed mode back onto the spins.
//!
//! Everything is integrated numerically in the joint spin-motion space; no
//! closed-form populations are used.

use super::ReadoutMode;
use crate::exchange::{propagate_fock, Envelope, ExchangeError, ExchangeParams, TwoModeFockState};
use crate::ode::{self, Tolerances};
use crate::units::khz_to_rad_per_us;
use num_complex::Complex64;

const LEVELS: usize = 4;

/// Duration of the two-ion sideband pulse, π/(√6 Ω₀), in µs.
pub fn two_ion_pulse_time_us(sideband0_khz: f64) -> f64 {
    std::f64::consts::PI / (6f64.sqrt() * khz_to_rad_per_us(sideband0_khz))
}

// Real Hamiltonian as (row, col, value) triples; both orderings present.
type Sparse = Vec<(usize, usize, f64)>;

fn evolve(h: &Sparse, psi: &mut [Complex64], duration: f64) -> Result<(), ExchangeError> {
    let mut y = ode::pack(psi);
    let n = psi.len();
    ode::integrate(
        |_, y, dy| {
            dy.iter_mut().for_each(|d| *d = 0.0);
            for &(r, c, v) in h {
                // dψ_r/dt += −i v ψ_c
                dy[2 * r] += v * y[2 * c + 1];
                dy[2 * r + 1] -= v * y[2 * c];
            }
        },
        0.0,
        duration,
        &mut y,
        &Tolerances::default(),
    )?;
    debug_assert_eq!(y.len(), 2 * n);
    psi.copy_from_slice(&ode::unpack(&y));
    Ok(())
}

/// Ω₀ Σ_j (σ_j⁺ a + σ_j⁻ a†) on spin ⊗ (spectator) ⊗ mode, where `index`
/// maps (spin, spectator level, mode level) to a basis index.
fn rsb_hamiltonian(omega0: f64, spectator_levels: usize, index: impl Fn(usize, usize, usize) -> usize) -> Sparse {
    let mut h = Sparse::new();
    for spin in 0..4usize {
        for ion in 0..2 {
            let bit = 1 << ion;
            if spin & bit != 0 {
                continue;
            }
            let up = spin | bit;
            for k in 0..spectator_levels {
                // |↓_j, n⟩ ↔ |↑_j, n−1⟩ with amplitude √n
                for n in 1..LEVELS {
                    let v = omega0 * (n as f64).sqrt();
                    let a = index(spin, k, n);
                    let b = index(up, k, n - 1);
                    h.push((a, b, v));
                    h.push((b, a, v));
                }
            }
        }
    }
    h
}

/// Mean dark-ion count of the full sequence with exchange `params` applied
/// for `t_us` and ground-state sideband rate `sideband0_khz`.
pub fn simulate_two_ion_sequence(
    params: &ExchangeParams,
    t_us: f64,
    which: ReadoutMode,
    sideband0_khz: f64,
) -> Result<f64, ExchangeError> {
    let omega0 = khz_to_rad_per_us(sideband0_khz);
    let pulse = two_ion_pulse_time_us(sideband0_khz);

    // Preparation on spin ⊗ w, starting from |↑↑⟩|0⟩.
    let prep_index = |spin: usize, _: usize, n: usize| spin * LEVELS + n;
    let h_prep = rsb_hamiltonian(omega0, 1, prep_index);
    let mut psi = vec![Complex64::new(0.0, 0.0); 4 * LEVELS];
    psi[prep_index(3, 0, 0)] = Complex64::new(1.0, 0.0);
    evolve(&h_prep, &mut psi, pulse)?;

    // Repump: spins reset to ↓↓, motional coherences destroyed.
    let motional: Vec<f64> = (0..LEVELS)
        .map(|n| (0..4).map(|s| psi[prep_index(s, 0, n)].norm_sqr()).sum())
        .collect();

    // Analysis basis: spin ⊗ w ⊗ s with the sideband acting on `which`.
    let full_index = |spin: usize, w: usize, s: usize| (spin * LEVELS + w) * LEVELS + s;
    let h_read = match which {
        ReadoutMode::W => rsb_hamiltonian(omega0, LEVELS, |spin, s, w| full_index(spin, w, s)),
        ReadoutMode::S => rsb_hamiltonian(omega0, LEVELS, full_index),
    };

    let mut dark = 0.0;
    for (n, &weight) in motional.iter().enumerate() {
        if weight < 1e-15 {
            continue;
        }
        let start = TwoModeFockState::number(n, 0, LEVELS - 1)?;
        let fock = propagate_fock(&start, params, &Envelope::Square, t_us)?;
        let mut psi = vec![Complex64::new(0.0, 0.0); 4 * LEVELS * LEVELS];
        for w in 0..LEVELS {
            for s in 0..LEVELS {
                psi[full_index(0, w, s)] = fock.amplitude(w, s);
            }
        }
        evolve(&h_read, &mut psi, pulse)?;
        let mut d = 0.0;
        for spin in 0..4usize {
            let ups = spin.count_ones() as f64;
            for w in 0..LEVELS {
                for s in 0..LEVELS {
                    d += ups * psi[full_index(spin, w, s)].norm_sqr();
                }
            }
        }
        dark += weight * d;
    }
    Ok(dark)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preparation_fractions() {
        // With no exchange, reading w gives (8/9)(16/9) and reading s gives 0.
        let p = ExchangeParams::resonant(1.0);
        let w = simulate_two_ion_sequence(&p, 0.0, ReadoutMode::W, 20.0).unwrap();
        assert!((w - 128.0 / 81.0).abs() < 1e-8, "{w}");
        let s = simulate_two_ion_sequence(&p, 0.0, ReadoutMode::S, 20.0).unwrap();
        assert!(s.abs() < 1e-10);
    }
}

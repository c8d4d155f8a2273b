//! Coherent two-mode exchange: truncated Fock propagation, swap timing and
//! first/second-moment dynamics for thermal states.
//!
//! Conventions: the interaction-frame Hamiltonian is
//! H = g(t) (e^{iθ} ŵ†ŝ + e^{−iθ} ŵŝ†), θ = Δt + φ, with t measured from the
//! start of each propagation. Amplitudes c_{mn} carry m quanta in w and n in s.

use crate::fields::PulseEnvelope;
use crate::ode::{self, OdeError, Tolerances};
use crate::units::khz_to_rad_per_us;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExchangeError {
    #[error("coupling rate must be positive")]
    ZeroCoupling,
    #[error("swap index must be an odd positive integer, got {0}")]
    EvenSwapIndex(u32),
    #[error("population {population:.3e} reached the truncation level")]
    TruncationLeak { population: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Drive parameters. Frequencies are ordinary (angular/2π) in kHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeParams {
    pub g_khz: f64,
    #[serde(default)]
    pub detuning_khz: f64,
    #[serde(default)]
    pub drive_phase_rad: f64,
}

impl ExchangeParams {
    pub fn resonant(g_khz: f64) -> Self {
        Self {
            g_khz,
            detuning_khz: 0.0,
            drive_phase_rad: 0.0,
        }
    }

    pub fn r0_khz(&self) -> f64 {
        2.0 * self.g_khz
    }

    /// Generalized flopping rate √(r₀² + Δ²).
    pub fn r_khz(&self) -> f64 {
        self.r0_khz().hypot(self.detuning_khz)
    }

    pub fn validate(&self) -> Result<(), ExchangeError> {
        if !(self.g_khz >= 0.0) || !self.detuning_khz.is_finite() || !self.drive_phase_rad.is_finite()
        {
            return Err(ExchangeError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Duration of the k-th swap, τ_k = kπ/(2g), in µs.
pub fn swap_time(g_khz: f64, k: u32) -> Result<f64, ExchangeError> {
    if !(g_khz > 0.0) {
        return Err(ExchangeError::ZeroCoupling);
    }
    if k % 2 == 0 {
        return Err(ExchangeError::EvenSwapIndex(k));
    }
    Ok(k as f64 * PI / (2.0 * khz_to_rad_per_us(g_khz)))
}

/// Time dependence of the coupling amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Envelope {
    #[default]
    Square,
    Shaped(PulseEnvelope),
}

impl Envelope {
    pub fn value(&self, t_us: f64) -> f64 {
        match self {
            Envelope::Square => 1.0,
            Envelope::Shaped(e) => e.value_unchecked(t_us),
        }
    }

    // Points where the envelope derivative jumps.
    fn breakpoints(&self, duration: f64) -> Vec<f64> {
        let mut pts = vec![0.0];
        if let Envelope::Shaped(e) = self {
            for p in [e.ramp_time_us, e.ramp_time_us + e.flat_time_us, e.total_duration_us()] {
                if p > 0.0 && p < duration {
                    pts.push(p);
                }
            }
        }
        pts.push(duration);
        pts.dedup();
        pts
    }
}

/// Pure two-mode state in a truncated Fock basis, 0 ≤ m, n ≤ n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeFockState {
    n_max: usize,
    amps: Vec<Complex64>,
}

impl TwoModeFockState {
    pub const LEAK_GUARD: f64 = 1e-8;

    pub fn vacuum(n_max: usize) -> Self {
        Self::number(0, 0, n_max).expect("vacuum fits any truncation")
    }

    pub fn number(m: usize, n: usize, n_max: usize) -> Result<Self, ExchangeError> {
        if m > n_max || n > n_max {
            return Err(ExchangeError::InvalidState(format!(
                "|{m},{n}> outside truncation {n_max}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); (n_max + 1) * (n_max + 1)];
        amps[m * (n_max + 1) + n] = Complex64::new(1.0, 0.0);
        Ok(Self { n_max, amps })
    }

    /// Amplitudes in row-major order, index m·(n_max+1) + n.
    pub fn from_amplitudes(n_max: usize, amps: Vec<Complex64>) -> Result<Self, ExchangeError> {
        if amps.len() != (n_max + 1) * (n_max + 1) {
            return Err(ExchangeError::InvalidState("amplitude count".into()));
        }
        let s = Self { n_max, amps };
        s.check_norm()?;
        Ok(s)
    }

    fn check_norm(&self) -> Result<(), ExchangeError> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(ExchangeError::InvalidState(format!("norm {norm}")));
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn idx(&self, m: usize, n: usize) -> usize {
        m * (self.n_max + 1) + n
    }

    pub fn amplitude(&self, m: usize, n: usize) -> Complex64 {
        self.amps[self.idx(m, n)]
    }

    pub fn population(&self, m: usize, n: usize) -> f64 {
        self.amplitude(m, n).norm_sqr()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn mean_w(&self) -> f64 {
        self.expect(|m, _| m as f64)
    }

    pub fn mean_s(&self) -> f64 {
        self.expect(|_, n| n as f64)
    }

    fn expect(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let d = self.n_max + 1;
        self.amps
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm_sqr() * f(i / d, i % d))
            .sum()
    }

    /// ⟨ŵ†ŝ⟩.
    pub fn cross(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..self.n_max {
            for n in 1..=self.n_max {
                let k = ((m + 1) as f64 * n as f64).sqrt();
                acc += self.amplitude(m + 1, n - 1).conj() * self.amplitude(m, n) * k;
            }
        }
        acc
    }

    /// Population on the truncation boundary (m or n equal to n_max).
    pub fn top_level_population(&self) -> f64 {
        let t = self.n_max;
        (0..=t)
            .map(|k| self.population(t, k) + if k < t { self.population(k, t) } else { 0.0 })
            .sum()
    }
}

/// Integrate the exchange Hamiltonian for `duration_us`.
///
/// H conserves m + n, so each manifold is integrated on its own; within a
/// manifold the truncation only bounds the range of m.
pub fn propagate_fock(
    state: &TwoModeFockState,
    params: &ExchangeParams,
    envelope: &Envelope,
    duration_us: f64,
) -> Result<TwoModeFockState, ExchangeError> {
    params.validate()?;
    state.check_norm()?;
    if !(duration_us >= 0.0) {
        return Err(ExchangeError::InvalidParams("negative duration".into()));
    }
    let g = khz_to_rad_per_us(params.g_khz);
    let delta = khz_to_rad_per_us(params.detuning_khz);
    let phi = params.drive_phase_rad;
    let nm = state.n_max;
    // Tight enough that norm drift stays below 1e-9 over hundreds of µs.
    let tol = Tolerances {
        rtol: 1e-12,
        atol: 1e-14,
        ..Tolerances::default()
    };
    let mut out = state.clone();

    for total in 0..=2 * nm {
        let lo = total.saturating_sub(nm);
        let hi = total.min(nm);
        let members: Vec<usize> = (lo..=hi).collect();
        let mut block: Vec<Complex64> =
            members.iter().map(|&m| state.amplitude(m, total - m)).collect();
        if block.iter().all(|c| c.norm_sqr() == 0.0) || members.len() < 2 {
            continue;
        }
        // Coupling between |m−1, N−m+1⟩ and |m, N−m⟩ has strength √m √(N−m+1).
        let k: Vec<f64> = members
            .iter()
            .map(|&m| (m as f64 * (total - m + 1) as f64).sqrt())
            .collect();
        let len = members.len();
        let mut y = ode::pack(&block);
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            let amp = g * envelope.value(t);
            let (s, c) = (delta * t + phi).sin_cos();
            let e = Complex64::new(c, s);
            let at = |i: usize| Complex64::new(y[2 * i], y[2 * i + 1]);
            for i in 0..len {
                let mut h = Complex64::new(0.0, 0.0);
                if i > 0 {
                    h += e * k[i] * at(i - 1);
                }
                if i + 1 < len {
                    h += e.conj() * k[i + 1] * at(i + 1);
                }
                // dc/dt = −i H c
                let d = Complex64::new(h.im, -h.re) * amp;
                dy[2 * i] = d.re;
                dy[2 * i + 1] = d.im;
            }
        };
        let mut rhs = rhs;
        let bps = envelope.breakpoints(duration_us);
        for w in bps.windows(2) {
            ode::integrate(&mut rhs, w[0], w[1], &mut y, &tol)?;
        }
        block = ode::unpack(&y);
        for (&m, c) in members.iter().zip(block) {
            let i = out.idx(m, total - m);
            out.amps[i] = c;
        }
    }
    let top = out.top_level_population();
    if top > TwoModeFockState::LEAK_GUARD {
        return Err(ExchangeError::TruncationLeak { population: top });
    }
    Ok(out)
}

/// Mean occupations and the mode correlation ⟨ŵ†ŝ⟩ of a Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub nbar_w: f64,
    pub nbar_s: f64,
    pub cross: Complex64,
}

impl MomentState {
    pub fn thermal(nbar_w: f64, nbar_s: f64) -> Self {
        Self {
            nbar_w,
            nbar_s,
            cross: Complex64::new(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), ExchangeError> {
        if !(self.nbar_w >= 0.0 && self.nbar_s >= 0.0) {
            return Err(ExchangeError::InvalidState("negative occupation".into()));
        }
        if self.cross.norm_sqr() > self.nbar_w * self.nbar_s + 1e-12 {
            return Err(ExchangeError::InvalidState(
                "correlation violates Cauchy-Schwarz".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.nbar_w + self.nbar_s
    }
}

/// Exchange plus damping of s toward a floor and linear heating of both
/// modes. Rates in 1/µs, frequencies in rad/µs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentDynamics {
    pub g: f64,
    pub detuning: f64,
    pub phase: f64,
    pub kappa_s: f64,
    pub floor_s: f64,
    pub heat_w: f64,
    pub heat_s: f64,
}

impl MomentDynamics {
    pub fn coherent(p: &ExchangeParams) -> Self {
        Self {
            g: khz_to_rad_per_us(p.g_khz),
            detuning: khz_to_rad_per_us(p.detuning_khz),
            phase: p.drive_phase_rad,
            ..Self::default()
        }
    }

    // State vector (N_w, N_s, Re X, Im X) with X = e^{iθ}⟨ŵ†ŝ⟩.
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let (nw, ns, xr, xi) = (y[0], y[1], y[2], y[3]);
        let half = 0.5 * self.kappa_s;
        dy[0] = 2.0 * self.g * xi + self.heat_w;
        dy[1] = -2.0 * self.g * xi - self.kappa_s * (ns - self.floor_s) + self.heat_s;
        // dX/dt = iΔX + ig(N_s − N_w) − (κ/2)X
        dy[2] = -self.detuning * xi - half * xr;
        dy[3] = self.detuning * xr + self.g * (ns - nw) - half * xi;
    }

    /// Evolve for `duration_us`, the drive phase starting at `phase`.
    pub fn evolve(&self, state: &MomentState, duration_us: f64) -> Result<MomentState, ExchangeError> {
        let e0 = Complex64::from_polar(1.0, self.phase);
        let x = e0 * state.cross;
        let mut y = [state.nbar_w, state.nbar_s, x.re, x.im];
        ode::integrate(
            |_, y, dy| self.rhs(y, dy),
            0.0,
            duration_us,
            &mut y,
            &Tolerances::default(),
        )?;
        let theta = self.detuning * duration_us + self.phase;
        let cross = Complex64::from_polar(1.0, -theta) * Complex64::new(y[2], y[3]);
        Ok(MomentState {
            nbar_w: y[0],
            nbar_s: y[1],
            cross,
        })
    }

    /// Linear system matrix for (N_w, N_s, Re X, Im X); constant part in `b`.
    pub fn linear_system(&self) -> ([[f64; 4]; 4], [f64; 4]) {
        let h = 0.5 * self.kappa_s;
        let a = [
            [0.0, 0.0, 0.0, 2.0 * self.g],
            [0.0, -self.kappa_s, 0.0, -2.0 * self.g],
            [0.0, 0.0, -h, -self.detuning],
            [-self.g, self.g, self.detuning, -h],
        ];
        let b = [self.heat_w, self.kappa_s * self.floor_s + self.heat_s, 0.0, 0.0];
        (a, b)
    }
}

/// Coherent exchange of a Gaussian state's moments.
pub fn moment_exchange(
    state: &MomentState,
    params: &ExchangeParams,
    duration_us: f64,
) -> Result<MomentState, ExchangeError> {
    params.validate()?;
    state.validate()?;
    MomentDynamics::coherent(params).evolve(state, duration_us)
}

//! Measurement models: scan lineshapes, dark-ion counts, sideband Rabi
//! rates, the cross-Kerr sideband spectrum and driven-motion suppression.

pub mod readout;

use crate::exchange::ExchangeParams;
use crate::special::{bessel_j0, laguerre};
use crate::units::khz_to_rad_per_us;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Dark-ion count after preparing two quanta and reading out a single quantum: 2(8/9)².
pub const TWO_ION_CONTRAST: f64 = 2.0 * (8.0 / 9.0) * (8.0 / 9.0);

/// Lineshape of a detuning scan of the coupling drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqScanParams {
    pub a: f64,
    pub r0_khz: f64,
    pub tau_us: f64,
    pub delta_ws_mhz: f64,
    pub p0: f64,
}

/// c(δ) = A sin²(rτ/2)/(r/r₀)² + P₀ with r = √(r₀² + (δ − δ_ws)²).
pub fn freq_scan_model(p: &FreqScanParams, delta_mhz: f64) -> f64 {
    let detuning_khz = (delta_mhz - p.delta_ws_mhz) * 1e3;
    let r = p.r0_khz.hypot(detuning_khz);
    if r == 0.0 {
        return p.p0;
    }
    let r_ang = khz_to_rad_per_us(r);
    let ratio = p.r0_khz / r;
    p.a * (0.5 * r_ang * p.tau_us).sin().powi(2) * ratio * ratio + p.p0
}

/// Damped flopping in the exchange duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScanParams {
    pub a: f64,
    pub r0_khz: f64,
    pub phi_rad: f64,
    pub gamma_per_ms: f64,
    pub y0: f64,
}

/// c(τ) = A sin(r₀τ + φ) e^{−γτ}/2 + y₀.
pub fn time_scan_model(p: &TimeScanParams, tau_us: f64) -> f64 {
    let r0 = khz_to_rad_per_us(p.r0_khz);
    let decay = (-p.gamma_per_ms * 1e-3 * tau_us).exp();
    0.5 * p.a * (r0 * tau_us + p.phi_rad).sin() * decay + p.y0
}

/// Probability that a single phonon has moved from w to s.
pub fn transfer_probability(params: &ExchangeParams, t_us: f64) -> f64 {
    let r = params.r_khz();
    if r == 0.0 {
        return 0.0;
    }
    let x = params.r0_khz() / r;
    let s = (0.5 * khz_to_rad_per_us(r) * t_us).sin();
    x * x * s * s
}

/// Populations (p₁₀, p₀₁) after exchanging |1⟩_w|0⟩_s for `t_us`.
pub fn single_phonon_transfer(params: &ExchangeParams, t_us: f64) -> (f64, f64) {
    let p01 = transfer_probability(params, t_us);
    (1.0 - p01, p01)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    W,
    S,
}

/// Correction d_w in the exact w-mode dark count.
pub fn correction_w(p_transfer: f64) -> f64 {
    (7.0 + 9.0 * (2.0 * PI / 3f64.sqrt()).cos()) / 16.0 * p_transfer
}

/// Correction d_s in the exact s-mode dark count.
pub fn correction_s(p_transfer: f64) -> f64 {
    let s = (PI / 3f64.sqrt()).sin();
    (9.0 * s * s - 8.0) / 8.0 * (1.0 - p_transfer)
}

/// Mean number of dark ions for the two-ion sequence (prepare two quanta in
/// w, exchange for `t_us`, analyze `which`).
pub fn two_ion_dark_counts(params: &ExchangeParams, t_us: f64, which: ReadoutMode, exact: bool) -> f64 {
    let p = transfer_probability(params, t_us);
    match (which, exact) {
        (ReadoutMode::W, false) => TWO_ION_CONTRAST * (1.0 - p),
        (ReadoutMode::S, false) => TWO_ION_CONTRAST * p,
        (ReadoutMode::W, true) => TWO_ION_CONTRAST * (1.0 - p) * (1.0 - correction_w(p)),
        (ReadoutMode::S, true) => TWO_ION_CONTRAST * p * (1.0 + correction_s(p)),
    }
}

/// Sign of the Debye–Waller exponent in the sideband matrix element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebyeWaller {
    /// e^{−η²/2}, the matrix element of the displacement operator.
    #[default]
    Decaying,
    /// e^{+η²/2}, as some references print it.
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiParams {
    /// Carrier Rabi rate Ω (kHz).
    pub carrier_khz: f64,
    /// Single-ion ground-state sideband rate Ω₀ (kHz).
    pub sideband0_khz: f64,
    pub eta: f64,
    #[serde(default)]
    pub debye_waller: DebyeWaller,
}

impl RabiParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta > 0.0 && self.carrier_khz > 0.0 && self.sideband0_khz > 0.0) {
            return Err("rabi rates and eta must be positive".into());
        }
        Ok(())
    }
}

/// First red-sideband Rabi rate from |n+1⟩ to |n⟩ (kHz):
/// Ω e^{∓η²/2} η L¹_n(η²)/√(n+1).
pub fn rsb_rabi(n: usize, p: &RabiParams) -> f64 {
    let e2 = p.eta * p.eta;
    let dw = match p.debye_waller {
        DebyeWaller::Decaying => (-0.5 * e2).exp(),
        DebyeWaller::Growing => (0.5 * e2).exp(),
    };
    p.carrier_khz * dw * p.eta * laguerre(n, 1.0, e2) / ((n + 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalWeights {
    /// n̄ⁿ/(1+n̄)ⁿ⁺¹.
    #[default]
    Normalized,
    /// (n̄/(1+n̄))ⁿ without the 1/(1+n̄) factor.
    Unnormalized,
}

fn thermal_weight(nbar: f64, n: usize, kind: ThermalWeights) -> f64 {
    let q = nbar / (1.0 + nbar);
    let w = if n == 0 { 1.0 } else { q.powi(n as i32) };
    match kind {
        ThermalWeights::Normalized => w / (1.0 + nbar),
        ThermalWeights::Unnormalized => w,
    }
}

/// Probability captured by the first `cutoff + 1` levels of a thermal state.
pub fn thermal_captured(nbar: f64, cutoff: usize) -> f64 {
    1.0 - (nbar / (1.0 + nbar)).powi(cutoff as i32 + 1)
}

/// Red-sideband spectrum of the stretch mode with cross-Kerr shifts from two
/// thermally occupied rocking modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KerrSpectrumParams {
    pub b: f64,
    pub f_rsb_mhz: f64,
    pub d0: f64,
    /// Cross-Kerr rates, angular/2π, in Hz.
    pub chi_zs_xr_hz: f64,
    pub chi_zs_yr_hz: f64,
    pub nbar_zs: f64,
    pub nbar_xr: f64,
    pub nbar_yr: f64,
    pub n_zs: usize,
    pub n_xr: usize,
    pub n_yr: usize,
    pub rabi: RabiParams,
    #[serde(default)]
    pub weights: ThermalWeights,
}

impl KerrSpectrumParams {
    pub const MIN_CAPTURE: f64 = 0.999;

    /// Stretch-mode parameters used in the Be⁺-Be⁺ measurements.
    pub fn be_be_defaults() -> Self {
        Self {
            b: 1.78,
            f_rsb_mhz: 1201.2124,
            d0: 0.05,
            chi_zs_xr_hz: 75.86,
            chi_zs_yr_hz: 95.4,
            nbar_zs: 0.05,
            nbar_xr: 0.05,
            nbar_yr: 0.05,
            n_zs: 5,
            n_xr: 20,
            n_yr: 20,
            rabi: RabiParams {
                carrier_khz: 0.86,
                sideband0_khz: 0.86 * 0.268,
                eta: 0.268,
                debye_waller: DebyeWaller::Decaying,
            },
            weights: ThermalWeights::Normalized,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.rabi.validate()?;
        if self.n_zs < 1 || self.n_xr < 1 || self.n_yr < 1 {
            return Err("truncations must be at least 1".into());
        }
        if !(self.nbar_zs >= 0.0 && self.nbar_xr >= 0.0 && self.nbar_yr >= 0.0) {
            return Err("occupations must be non-negative".into());
        }
        Ok(())
    }

    /// Total thermal weight inside the truncated sum.
    pub fn weight_sum(&self) -> f64 {
        let s = |nbar: f64, cut: usize| -> f64 {
            (0..=cut).map(|n| thermal_weight(nbar, n, self.weights)).sum()
        };
        s(self.nbar_zs, self.n_zs) * s(self.nbar_xr, self.n_xr) * s(self.nbar_yr, self.n_yr)
    }

    /// Modes whose truncation captures less than 99.9% of the thermal weight.
    pub fn truncation_warnings(&self) -> Vec<TruncationWarning> {
        [
            ("zs", self.nbar_zs, self.n_zs),
            ("xr", self.nbar_xr, self.n_xr),
            ("yr", self.nbar_yr, self.n_yr),
        ]
        .into_iter()
        .filter_map(|(mode, nbar, cut)| {
            let captured = thermal_captured(nbar, cut);
            (captured < Self::MIN_CAPTURE).then(|| TruncationWarning {
                mode: mode.to_string(),
                captured,
            })
        })
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationWarning {
    pub mode: String,
    pub captured: f64,
}

impl std::fmt::Display for TruncationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "truncation for {} captures only {:.4} of the thermal weight",
            self.mode, self.captured
        )
    }
}

/// Mean dark-ion count D_zs(f) at probe frequency `f_mhz`.
///
/// The probe duration is fixed at the ground-state π time π/Ω_rsb,0(0), so
/// excited stretch-mode levels are over- or under-rotated.
pub fn kerr_spectrum(p: &KerrSpectrumParams, f_mhz: f64) -> f64 {
    // Rates in rad/ms to keep numbers O(1).
    let to_ang = |khz: f64| TAU * khz;
    let omega_ref = to_ang(rsb_rabi(0, &p.rabi));
    let probe = TAU * (f_mhz - p.f_rsb_mhz) * 1e3;
    let chi_xr = TAU * p.chi_zs_xr_hz * 1e-3;
    let chi_yr = TAU * p.chi_zs_yr_hz * 1e-3;

    let wx: Vec<f64> = (0..=p.n_xr).map(|n| thermal_weight(p.nbar_xr, n, p.weights)).collect();
    let wy: Vec<f64> = (0..=p.n_yr).map(|n| thermal_weight(p.nbar_yr, n, p.weights)).collect();

    let mut total = 0.0;
    for nz in 0..=p.n_zs {
        let wz = thermal_weight(p.nbar_zs, nz, p.weights);
        let om0 = to_ang(rsb_rabi(nz, &p.rabi));
        let mut inner = 0.0;
        for (nx, wxn) in wx.iter().enumerate() {
            for (ny, wyn) in wy.iter().enumerate() {
                let det = probe - chi_xr * nx as f64 - chi_yr * ny as f64;
                let om2 = om0 * om0 + det * det;
                let c = if om2 == 0.0 {
                    // Ω₀ = 0 only at a Laguerre zero: the transition is dark.
                    0.0
                } else {
                    let s = (PI * om2.sqrt() / (2.0 * omega_ref)).sin();
                    p.b * om0 * om0 * s * s / om2
                };
                inner += wxn * wyn * (c + p.d0);
            }
        }
        total += wz * inner;
    }
    total
}

/// Driven-motion suppression |J₀(Δk β r₀)| of a Raman transition.
pub fn bessel_suppression(dk_per_m: f64, beta_nm_per_khz: f64, r0_khz: f64) -> f64 {
    bessel_j0(dk_per_m * beta_nm_per_khz * 1e-9 * r0_khz).abs()
}

/// Two-ion fluorescence calibration (mean counts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCalibration {
    pub c2: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkEstimate {
    pub value: f64,
    /// True when the raw estimate fell outside [0, 2] and was clamped.
    pub clamped: bool,
}

/// Mean dark-ion number D = 2(C₂ − C)/(C₂ − C₀).
pub fn dark_from_counts(counts: f64, cal: &DetectionCalibration) -> Result<DarkEstimate, String> {
    if !(cal.c2 > cal.c0 && cal.c0 >= 0.0) {
        return Err("calibration requires C2 > C0 >= 0".into());
    }
    let raw = 2.0 * (cal.c2 - counts) / (cal.c2 - cal.c0);
    let value = raw.clamp(0.0, 2.0);
    Ok(DarkEstimate {
        value,
        clamped: value != raw,
    })
}

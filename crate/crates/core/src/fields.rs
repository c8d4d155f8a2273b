//! Coupling potentials as local Taylor data, the resulting mode coupling
//! rates, electrode amplitude optimization, pulse envelopes and the drive
//! filter response.

use crate::crystal::{Axis, ModeTable};
use crate::units::rad_per_s_to_khz;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("missing curvature d2U/d{0}d{1} at ion {2}")]
    MissingCurvature(Axis, Axis, usize),
    #[error("missing component {0:?} in electrode {1}")]
    MissingComponent(Component, u32),
    #[error("unknown mode {0}")]
    UnknownMode(String),
    #[error("modes must differ")]
    SameMode,
    #[error("expected {expected} per-ion expansions, got {got}")]
    IonCountMismatch { expected: usize, got: usize },
    #[error("target not reachable with this basis (relative residual {0:.3e})")]
    InfeasibleTarget(f64),
    #[error("time {t} µs outside envelope [0, {end}] µs")]
    OutOfRange { t: f64, end: f64 },
    #[error("invalid field data: {0}")]
    Invalid(String),
}

/// Local Taylor data of an electric potential (SI units, positions in µm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldExpansion {
    #[serde(default)]
    pub position_um: [f64; 3],
    #[serde(default)]
    pub gradient_v_per_m: Option<[f64; 3]>,
    #[serde(default)]
    pub hessian_v_per_m2: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    pub third_axial_v_per_m3: Option<f64>,
    /// Laplace-obeying potential: the Hessian must be traceless.
    #[serde(default = "yes")]
    pub physical: bool,
}

fn yes() -> bool {
    true
}

impl FieldExpansion {
    pub fn zero_at(position_um: [f64; 3]) -> Self {
        Self {
            position_um,
            gradient_v_per_m: Some([0.0; 3]),
            hessian_v_per_m2: Some([[0.0; 3]; 3]),
            third_axial_v_per_m3: Some(0.0),
            physical: true,
        }
    }

    /// Pure cubic axial potential U ∝ z³ about `position_um`, with
    /// ∂³U/∂z³ = `third`. Curvatures vanish at the expansion point.
    pub fn cubic_axial(position_um: [f64; 3], third: f64) -> Self {
        Self {
            third_axial_v_per_m3: Some(third),
            ..Self::zero_at(position_um)
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if let Some(h) = &self.hessian_v_per_m2 {
            let scale = h.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..3 {
                for j in 0..i {
                    if (h[i][j] - h[j][i]).abs() > 1e-12 * scale.max(1e-300) {
                        return Err(FieldError::Invalid("hessian must be symmetric".into()));
                    }
                }
            }
            if self.physical {
                let trace = h[0][0] + h[1][1] + h[2][2];
                if trace.abs() > 1e-6 * scale {
                    return Err(FieldError::Invalid(format!(
                        "physical potential has hessian trace {trace:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Curvature ∂²U/∂a∂b at `at_um`, extrapolating the zz element with the
    /// third axial derivative.
    pub fn curvature(&self, a: Axis, b: Axis, at_um: [f64; 3]) -> Option<f64> {
        let base = self.hessian_v_per_m2.map(|h| h[a.index()][b.index()]);
        if a == Axis::Z && b == Axis::Z {
            let dz = (at_um[2] - self.position_um[2]) * 1e-6;
            match (base, self.third_axial_v_per_m3) {
                (Some(h), Some(t)) => Some(h + t * dz),
                (Some(h), None) => Some(h),
                (None, Some(t)) => Some(t * dz),
                (None, None) => None,
            }
        } else {
            base
        }
    }

    fn component(&self, kind: ComponentKind) -> Option<f64> {
        match kind {
            ComponentKind::Gradient { axis } => self.gradient_v_per_m.map(|g| g[axis.index()]),
            ComponentKind::Curvature { a, b } => self.hessian_v_per_m2.map(|h| h[a.index()][b.index()]),
            ComponentKind::ThirdAxial => self.third_axial_v_per_m3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRate {
    /// |g| in kHz (angular rate / 2π).
    pub g_khz: f64,
    /// Signed per-ion contributions g_j in kHz.
    pub contributions_khz: Vec<f64>,
}

/// Parametric coupling rate between two modes for a potential described by
/// one expansion per ion (index-aligned with the crystal).
pub fn coupling_rate(
    modes: &ModeTable,
    field: &[FieldExpansion],
    mode_w: &str,
    mode_s: &str,
) -> Result<CouplingRate, FieldError> {
    if mode_w == mode_s {
        return Err(FieldError::SameMode);
    }
    let w = modes
        .mode(mode_w)
        .ok_or_else(|| FieldError::UnknownMode(mode_w.to_string()))?;
    let s = modes
        .mode(mode_s)
        .ok_or_else(|| FieldError::UnknownMode(mode_s.to_string()))?;
    let n = modes.num_ions();
    if field.len() != n {
        return Err(FieldError::IonCountMismatch {
            expected: n,
            got: field.len(),
        });
    }
    let k = crate::crystal::PhysicalConstants::CODATA_2018;
    let freq_norm = (w.angular_frequency() * s.angular_frequency()).sqrt();

    let mut contributions = Vec::with_capacity(n);
    for j in 0..n {
        let at = [0.0, 0.0, modes.equilibrium_positions_um[j]];
        let alpha = field[j]
            .curvature(w.axis, s.axis, at)
            .ok_or(FieldError::MissingCurvature(w.axis, s.axis, j))?;
        let ion = &modes.ions[j];
        let q = ion.charge as f64 * k.elementary_charge;
        let m = ion.mass_u * k.atomic_mass_unit;
        let g = q * alpha * w.participation[j] * s.participation[j] / (4.0 * m * freq_norm);
        contributions.push(rad_per_s_to_khz(g));
    }
    Ok(CouplingRate {
        g_khz: contributions.iter().sum::<f64>().abs(),
        contributions_khz: contributions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub id: u32,
    /// Per-unit-volt expansion at each ion's equilibrium position.
    pub ions: Vec<FieldExpansion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeBasis {
    pub electrodes: Vec<Electrode>,
}

impl ElectrodeBasis {
    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let b: Self =
            serde_json::from_str(text).map_err(|e| FieldError::Invalid(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let first = self
            .electrodes
            .first()
            .ok_or_else(|| FieldError::Invalid("electrode basis is empty".into()))?;
        for e in &self.electrodes {
            if e.ions.len() != first.ions.len() {
                return Err(FieldError::IonCountMismatch {
                    expected: first.ions.len(),
                    got: e.ions.len(),
                });
            }
            for x in &e.ions {
                if !x.physical {
                    return Err(FieldError::Invalid(format!(
                        "electrode {} carries a non-physical expansion",
                        e.id
                    )));
                }
                x.validate()?;
            }
        }
        Ok(())
    }

    pub fn num_ions(&self) -> usize {
        self.electrodes.first().map_or(0, |e| e.ions.len())
    }

    fn value(&self, electrode: usize, c: Component) -> Result<f64, FieldError> {
        let e = &self.electrodes[electrode];
        e.ions
            .get(c.ion)
            .and_then(|x| x.component(c.kind))
            .ok_or(FieldError::MissingComponent(c, e.id))
    }

    /// Potential produced by the given amplitudes, one expansion per ion.
    pub fn combine(&self, amplitudes: &[f64]) -> Vec<FieldExpansion> {
        (0..self.num_ions())
            .map(|j| {
                let pos = self.electrodes[0].ions[j].position_um;
                let mut out = FieldExpansion::zero_at(pos);
                for (e, v) in self.electrodes.iter().zip(amplitudes) {
                    let x = &e.ions[j];
                    if let (Some(acc), Some(g)) = (&mut out.gradient_v_per_m, x.gradient_v_per_m) {
                        (0..3).for_each(|i| acc[i] += v * g[i]);
                    }
                    if let (Some(acc), Some(h)) = (&mut out.hessian_v_per_m2, x.hessian_v_per_m2) {
                        (0..3).for_each(|i| (0..3).for_each(|k| acc[i][k] += v * h[i][k]));
                    }
                    if let (Some(acc), Some(t)) = (&mut out.third_axial_v_per_m3, x.third_axial_v_per_m3) {
                        *acc += v * t;
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentKind {
    Gradient { axis: Axis },
    Curvature { a: Axis, b: Axis },
    ThirdAxial,
}

/// One scalar derivative of the potential at one ion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub ion: usize,
    pub kind: ComponentKind,
}

impl Component {
    pub fn gradient(ion: usize, a: Axis) -> Self {
        Self { ion, kind: ComponentKind::Gradient { axis: a } }
    }
    pub fn curvature(ion: usize, a: Axis, b: Axis) -> Self {
        Self { ion, kind: ComponentKind::Curvature { a, b } }
    }
    pub fn third_axial(ion: usize) -> Self {
        Self { ion, kind: ComponentKind::ThirdAxial }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// Weight applied to every target residual.
    pub target_weight: f64,
    /// Tikhonov term on the amplitudes (V⁻²); zero gives the minimum-norm solution.
    pub ridge: f64,
    /// Relative residual above which the target counts as unreachable.
    pub feasibility_tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            target_weight: 1.0,
            ridge: 0.0,
            feasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    pub component: Component,
    pub achieved: f64,
    pub requested: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSolution {
    pub amplitudes: Vec<f64>,
    pub report: Vec<ComponentReport>,
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-13 * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps).expect("both singular vector sets computed")
}

/// Weighted linear least squares for electrode amplitudes:
/// minimize ‖w_t (T V − t)‖² + Σ_k ‖w_k N_k V‖² + ridge ‖V‖².
pub fn optimize_amplitudes(
    basis: &ElectrodeBasis,
    targets: &[(Component, f64)],
    nulls: &[(Component, f64)],
    opts: &OptimizeOptions,
) -> Result<AmplitudeSolution, FieldError> {
    basis.validate()?;
    let ne = basis.electrodes.len();
    let row = |c: Component| -> Result<Vec<f64>, FieldError> {
        (0..ne).map(|e| basis.value(e, c)).collect()
    };

    let t_rows: Vec<Vec<f64>> = targets.iter().map(|(c, _)| row(*c)).collect::<Result<_, _>>()?;
    let n_rows: Vec<Vec<f64>> = nulls.iter().map(|(c, _)| row(*c)).collect::<Result<_, _>>()?;

    // Reachability of the targets on their own.
    if !targets.is_empty() {
        let t = DMatrix::from_fn(targets.len(), ne, |i, j| t_rows[i][j]);
        let rhs = DVector::from_iterator(targets.len(), targets.iter().map(|(_, v)| *v));
        let v = lstsq(&t, &rhs);
        let resid = (&t * &v - &rhs).norm();
        let rel = resid / rhs.norm().max(1e-300);
        if rel > opts.feasibility_tol {
            return Err(FieldError::InfeasibleTarget(rel));
        }
    }

    let ridge_rows = if opts.ridge > 0.0 { ne } else { 0 };
    let m = targets.len() + nulls.len() + ridge_rows;
    let mut a = DMatrix::zeros(m, ne);
    let mut b = DVector::zeros(m);
    let mut r = 0;
    for (i, (_, value)) in targets.iter().enumerate() {
        for j in 0..ne {
            a[(r, j)] = opts.target_weight * t_rows[i][j];
        }
        b[r] = opts.target_weight * value;
        r += 1;
    }
    for (i, (_, weight)) in nulls.iter().enumerate() {
        for j in 0..ne {
            a[(r, j)] = weight * n_rows[i][j];
        }
        r += 1;
    }
    let sr = opts.ridge.sqrt();
    for j in 0..ridge_rows {
        a[(r, j)] = sr;
        r += 1;
    }
    let v = lstsq(&a, &b);
    let amplitudes: Vec<f64> = v.iter().copied().collect();

    let achieved = |coeffs: &[f64]| coeffs.iter().zip(&amplitudes).map(|(c, v)| c * v).sum();
    let mut report: Vec<ComponentReport> = targets
        .iter()
        .zip(&t_rows)
        .map(|((c, val), row)| ComponentReport {
            component: *c,
            achieved: achieved(row),
            requested: Some(*val),
        })
        .collect();
    report.extend(nulls.iter().zip(&n_rows).map(|((c, _), row)| ComponentReport {
        component: *c,
        achieved: achieved(row),
        requested: None,
    }));
    Ok(AmplitudeSolution { amplitudes, report })
}

/// Sine-squared ramp, flat top, time-reversed ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub ramp_time_us: f64,
    pub flat_time_us: f64,
    pub ramp_freq_khz: f64,
}

impl PulseEnvelope {
    pub const DEFAULT_RAMP_US: f64 = 20.0;
    pub const DEFAULT_RAMP_FREQ_KHZ: f64 = 12.5;

    /// Default ramp with the given flat-top duration.
    pub fn with_flat_time(flat_time_us: f64) -> Self {
        Self {
            ramp_time_us: Self::DEFAULT_RAMP_US,
            flat_time_us,
            ramp_freq_khz: Self::DEFAULT_RAMP_FREQ_KHZ,
        }
    }

    /// Shaped pulse with the same area as a square pulse of `square_us`.
    pub fn equal_area(square_us: f64) -> Self {
        Self::with_flat_time((square_us - Self::DEFAULT_RAMP_US).max(0.0))
    }

    pub fn total_duration_us(&self) -> f64 {
        2.0 * self.ramp_time_us + self.flat_time_us
    }

    pub fn value(&self, t_us: f64) -> Result<f64, FieldError> {
        let end = self.total_duration_us();
        if !(0.0..=end).contains(&t_us) {
            return Err(FieldError::OutOfRange { t: t_us, end });
        }
        Ok(self.value_unchecked(t_us))
    }

    /// Envelope value; zero outside the pulse.
    pub fn value_unchecked(&self, t_us: f64) -> f64 {
        let end = self.total_duration_us();
        if t_us < 0.0 || t_us > end {
            return 0.0;
        }
        let ramp = |t: f64| (TAU * self.ramp_freq_khz * 1e-3 * t).sin().powi(2);
        if t_us < self.ramp_time_us {
            ramp(t_us)
        } else if t_us <= self.ramp_time_us + self.flat_time_us {
            1.0
        } else {
            ramp(end - t_us)
        }
    }
}

/// Shorthand for [`PulseEnvelope::value`].
pub fn envelope_value(env: &PulseEnvelope, t_us: f64) -> Result<f64, FieldError> {
    env.value(t_us)
}

/// Cascade of identical single-pole low-pass sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub corner_freq_khz: f64,
    pub stages: u32,
}

impl Default for FilterModel {
    fn default() -> Self {
        Self {
            corner_freq_khz: 50.0,
            stages: 2,
        }
    }
}

/// Amplitude transmission of the filter at `f_mhz`.
pub fn filter_attenuation(filter: &FilterModel, f_mhz: f64) -> f64 {
    let x = f_mhz * 1e3 / filter.corner_freq_khz;
    (1.0 + x * x).powf(-(filter.stages as f64) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingDrive {
    pub mode_w: String,
    pub mode_s: String,
    pub drive_freq_mhz: f64,
    /// g in kHz.
    pub coupling_rate_khz: f64,
    pub envelope: PulseEnvelope,
    #[serde(default)]
    pub amplitudes_v: Vec<f64>,
}

impl CouplingDrive {
    /// On-resonance exchange rate r₀ = 2g (kHz).
    pub fn exchange_rate_khz(&self) -> f64 {
        2.0 * self.coupling_rate_khz
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.coupling_rate_khz >= 0.0) {
            return Err(FieldError::Invalid("coupling rate must be non-negative".into()));
        }
        if !(self.drive_freq_mhz > 0.0) {
            return Err(FieldError::Invalid("drive frequency must be positive".into()));
        }
        if self.mode_w == self.mode_s {
            return Err(FieldError::SameMode);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_points() {
        let env = PulseEnvelope::with_flat_time(40.0);
        assert!((env.value(10.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((env.value(20.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((env.value(50.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((env.value(70.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(env.value(0.0).unwrap(), 0.0);
        assert!(env.value(80.0).unwrap().abs() < 1e-28);
        assert!(matches!(env.value(80.1), Err(FieldError::OutOfRange { .. })));
        assert!(env.value(-0.1).is_err());
    }

    #[test]
    fn envelope_area_matches_square_pulse() {
        // Simpson quadrature over the whole pulse.
        let env = PulseEnvelope::with_flat_time(33.0);
        let end = env.total_duration_us();
        let n = 20_000;
        let h = end / n as f64;
        let mut s = env.value(0.0).unwrap() + env.value(end).unwrap();
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * env.value(i as f64 * h).unwrap();
        }
        let area = s * h / 3.0;
        assert!((area - 53.0).abs() < 1e-9, "area {area}");
    }

    #[test]
    fn filter_points() {
        let f = FilterModel::default();
        assert_eq!(filter_attenuation(&f, 0.0), 1.0);
        assert!((filter_attenuation(&f, 0.05) - 0.5).abs() < 1e-15);
        let one_mhz = filter_attenuation(&f, 1.0);
        assert!((one_mhz - 1.0 / 401.0).abs() < 1e-15);
        assert!(one_mhz < 2.6e-3);
    }

    fn one_electrode(hxz: f64, gz: f64) -> ElectrodeBasis {
        let mut h = [[0.0; 3]; 3];
        h[0][2] = hxz;
        h[2][0] = hxz;
        ElectrodeBasis {
            electrodes: vec![Electrode {
                id: 1,
                ions: vec![FieldExpansion {
                    position_um: [0.0; 3],
                    gradient_v_per_m: Some([0.0, 0.0, gz]),
                    hessian_v_per_m2: Some(h),
                    third_axial_v_per_m3: Some(0.0),
                    physical: true,
                }],
            }],
        }
    }

    #[test]
    fn single_pure_curvature_electrode() {
        let basis = one_electrode(2.0e6, 0.0);
        let target = Component::curvature(0, Axis::X, Axis::Z);
        let sol = optimize_amplitudes(
            &basis,
            &[(target, 5.0e6)],
            &[(Component::gradient(0, Axis::Z), 1.0)],
            &OptimizeOptions::default(),
        )
        .unwrap();
        assert!((sol.amplitudes[0] - 2.5).abs() < 1e-12);
        assert_eq!(sol.report[1].achieved, 0.0);
    }

    #[test]
    fn nulling_trades_curvature_for_gradient() {
        let basis = one_electrode(1.0e6, 300.0);
        let target = (Component::curvature(0, Axis::X, Axis::Z), 1.0e6);
        let grad = Component::gradient(0, Axis::Z);
        let opts = OptimizeOptions::default();
        let plain = optimize_amplitudes(&basis, &[target], &[], &opts).unwrap();
        let nulled = optimize_amplitudes(&basis, &[target], &[(grad, 3000.0)], &opts).unwrap();
        let g_plain = 300.0 * plain.amplitudes[0];
        let g_nulled = nulled.report[1].achieved;
        assert!(g_nulled.abs() < g_plain.abs());
        assert!(nulled.report[0].achieved < 1.0e6);
    }

    #[test]
    fn infeasible_target_detected() {
        let basis = one_electrode(1.0e6, 0.0);
        let err = optimize_amplitudes(
            &basis,
            &[
                (Component::curvature(0, Axis::X, Axis::Z), 1.0e6),
                (Component::gradient(0, Axis::Z), 10.0),
            ],
            &[],
            &OptimizeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, FieldError::InfeasibleTarget(_)));
    }

    #[test]
    fn unphysical_hessian_rejected() {
        let mut x = FieldExpansion::zero_at([0.0; 3]);
        x.hessian_v_per_m2 = Some([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(x.validate().is_err());
        x.physical = false;
        assert!(x.validate().is_ok());
    }

    #[test]
    fn cubic_curvature_is_linear_in_z() {
        let x = FieldExpansion::cubic_axial([0.0; 3], 4.0e9);
        assert_eq!(x.curvature(Axis::Z, Axis::Z, [0.0, 0.0, 2.0]), Some(8.0e3));
        assert_eq!(x.curvature(Axis::Z, Axis::Z, [0.0, 0.0, -2.0]), Some(-8.0e3));
        assert_eq!(x.curvature(Axis::X, Axis::Z, [0.0, 0.0, 2.0]), Some(0.0));
    }
}

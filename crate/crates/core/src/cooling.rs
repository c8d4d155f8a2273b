//! Mean-occupation dynamics for pulsed and simultaneous indirect cooling.
//!
//! Occupations are tracked per mode label. Every element of a schedule heats
//! all modes linearly at their own rate for its duration.

use crate::exchange::{ExchangeError, MomentDynamics, MomentState};
use crate::special::bessel_j0;
use crate::units::khz_to_rad_per_us;
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoolingError {
    #[error("unknown mode {0}")]
    UnknownMode(String),
    #[error("no steady state: {0}")]
    NoSteadyState(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid rates for {mode}: {reason}")]
    InvalidRates { mode: String, reason: String },
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
}

/// Heating and direct-cooling rates of one mode. Rates in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRates {
    pub heating_rate_per_s: f64,
    #[serde(default)]
    pub csbc_rate_per_s: f64,
    #[serde(default)]
    pub cooling_floor: f64,
    #[serde(default)]
    pub second_order_rate_per_s: Option<f64>,
    #[serde(default)]
    pub second_order_floor: Option<f64>,
}

impl ModeRates {
    pub fn heating_only(rate_per_s: f64) -> Self {
        Self {
            heating_rate_per_s: rate_per_s,
            csbc_rate_per_s: 0.0,
            cooling_floor: 0.0,
            second_order_rate_per_s: None,
            second_order_floor: None,
        }
    }

    pub fn cooled(heating: f64, kappa: f64, floor: f64) -> Self {
        Self {
            csbc_rate_per_s: kappa,
            cooling_floor: floor,
            ..Self::heating_only(heating)
        }
    }

    pub fn validate(&self, mode: &str) -> Result<(), CoolingError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        let all = [
            self.heating_rate_per_s,
            self.csbc_rate_per_s,
            self.cooling_floor,
            self.second_order_rate_per_s.unwrap_or(0.0),
            self.second_order_floor.unwrap_or(0.0),
        ];
        if all.iter().all(|&x| ok(x)) {
            Ok(())
        } else {
            Err(CoolingError::InvalidRates {
                mode: mode.to_string(),
                reason: "rates and floors must be finite and non-negative".into(),
            })
        }
    }

    // (κ, floor) for a sideband pulse of the given order.
    fn csbc(&self, order: u8) -> (f64, f64) {
        if order == 2 {
            (
                self.second_order_rate_per_s.unwrap_or(self.csbc_rate_per_s),
                self.second_order_floor.unwrap_or(self.cooling_floor),
            )
        } else {
            (self.csbc_rate_per_s, self.cooling_floor)
        }
    }
}

/// Phase modulation of the cooling beams by driven motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselParams {
    pub dk_per_m: f64,
    pub beta_nm_per_khz: f64,
}

impl BesselParams {
    /// Δk for a Raman pair at 280 nm crossing at 90°.
    pub const MG_RAMAN_DK_PER_M: f64 = std::f64::consts::SQRT_2 * std::f64::consts::TAU / 280e-9;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousCoolingParams {
    pub kappa0_per_s: f64,
    /// Cooling linewidth Γ (kHz); `None` disables the dressed-mode penalty.
    #[serde(default)]
    pub linewidth_khz: Option<f64>,
    #[serde(default)]
    pub bessel: Option<BesselParams>,
}

impl ContinuousCoolingParams {
    /// κ_eff = κ₀ J₀(Δk β r₀)² / (1 + (2g/Γ)²), in 1/s.
    pub fn effective_rate(&self, g_khz: f64) -> f64 {
        let r0 = 2.0 * g_khz;
        let bessel = self.bessel.map_or(1.0, |b| {
            bessel_j0(b.dk_per_m * b.beta_nm_per_khz * 1e-9 * r0).powi(2)
        });
        let penalty = self
            .linewidth_khz
            .map_or(1.0, |gamma| 1.0 / (1.0 + (r0 / gamma).powi(2)));
        self.kappa0_per_s * bessel * penalty
    }

    pub fn validate(&self) -> Result<(), CoolingError> {
        let bad = |r: &str| Err(CoolingError::InvalidSchedule(r.to_string()));
        if !(self.kappa0_per_s >= 0.0) {
            return bad("kappa0 must be non-negative");
        }
        if let Some(g) = self.linewidth_khz {
            if !(g > 0.0) {
                return bad("cooling linewidth must be positive");
            }
        }
        if let Some(b) = self.bessel {
            if !(b.beta_nm_per_khz >= 0.0 && b.dk_per_m >= 0.0) {
                return bad("bessel parameters must be non-negative");
            }
        }
        Ok(())
    }
}

fn default_fidelity() -> f64 {
    0.99
}

fn default_order() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScheduleElement {
    Csbc {
        mode: String,
        duration_us: f64,
        #[serde(default = "default_order")]
        order: u8,
    },
    Swap {
        modes: [String; 2],
        duration_us: f64,
        #[serde(default = "default_fidelity")]
        fidelity: f64,
    },
    Delay {
        duration_us: f64,
    },
    /// Coupling drive on (wcm, scm) while the scm is cooled continuously.
    SimultaneousCool {
        wcm: String,
        scm: String,
        g_khz: f64,
        duration_us: f64,
        #[serde(default)]
        cooling: Option<ContinuousCoolingParams>,
    },
    /// Change of trap settings; instantaneous and adds no quanta.
    TrapRamp {
        #[serde(default)]
        label: String,
    },
    Repeat {
        block: Vec<ScheduleElement>,
        count: u32,
    },
}

impl ScheduleElement {
    pub fn duration_us(&self) -> f64 {
        match self {
            Self::Csbc { duration_us, .. }
            | Self::Swap { duration_us, .. }
            | Self::Delay { duration_us }
            | Self::SimultaneousCool { duration_us, .. } => *duration_us,
            Self::TrapRamp { .. } => 0.0,
            Self::Repeat { block, count } => {
                *count as f64 * block.iter().map(|e| e.duration_us()).sum::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub elements: Vec<ScheduleElement>,
}

impl Schedule {
    pub fn new(elements: Vec<ScheduleElement>) -> Self {
        Self { elements }
    }

    pub fn repeated(self, count: u32) -> Self {
        Self::new(vec![ScheduleElement::Repeat {
            block: self.elements,
            count,
        }])
    }

    pub fn duration_us(&self) -> f64 {
        self.elements.iter().map(|e| e.duration_us()).sum()
    }

    pub fn validate(&self, modes: &[String]) -> Result<(), CoolingError> {
        fn check(e: &ScheduleElement, modes: &[String]) -> Result<(), CoolingError> {
            let known = |m: &String| {
                if modes.contains(m) {
                    Ok(())
                } else {
                    Err(CoolingError::UnknownMode(m.clone()))
                }
            };
            let positive = |d: f64| {
                if d > 0.0 && d.is_finite() {
                    Ok(())
                } else {
                    Err(CoolingError::InvalidSchedule(format!("duration {d} µs must be positive")))
                }
            };
            match e {
                ScheduleElement::Csbc { mode, duration_us, order } => {
                    known(mode)?;
                    positive(*duration_us)?;
                    if !matches!(order, 1 | 2) {
                        return Err(CoolingError::InvalidSchedule(format!("sideband order {order}")));
                    }
                }
                ScheduleElement::Swap { modes: pair, duration_us, fidelity } => {
                    known(&pair[0])?;
                    known(&pair[1])?;
                    positive(*duration_us)?;
                    if !(0.0..=1.0).contains(fidelity) {
                        return Err(CoolingError::InvalidSchedule(format!(
                            "swap fidelity {fidelity} outside [0, 1]"
                        )));
                    }
                    if pair[0] == pair[1] {
                        return Err(CoolingError::InvalidSchedule("swap needs two modes".into()));
                    }
                }
                ScheduleElement::Delay { duration_us } => positive(*duration_us)?,
                ScheduleElement::SimultaneousCool { wcm, scm, g_khz, duration_us, cooling } => {
                    known(wcm)?;
                    known(scm)?;
                    positive(*duration_us)?;
                    if !(*g_khz >= 0.0) || wcm == scm {
                        return Err(CoolingError::InvalidSchedule("bad simultaneous cooling".into()));
                    }
                    if let Some(c) = cooling {
                        c.validate()?;
                    }
                }
                ScheduleElement::TrapRamp { .. } => {}
                ScheduleElement::Repeat { block, .. } => {
                    for b in block {
                        check(b, modes)?;
                    }
                }
            }
            Ok(())
        }
        for e in &self.elements {
            check(e, modes)?;
        }
        Ok(())
    }
}

/// Occupations sampled after every schedule element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationTrajectory {
    pub modes: Vec<String>,
    pub times_us: Vec<f64>,
    /// nbar[k][i]: mode i at sample k.
    pub nbar: Vec<Vec<f64>>,
}

impl OccupationTrajectory {
    pub fn final_nbar(&self) -> &[f64] {
        self.nbar.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn series(&self, mode: &str) -> Option<Vec<f64>> {
        let i = self.modes.iter().position(|m| m == mode)?;
        Some(self.nbar.iter().map(|row| row[i]).collect())
    }
}

/// A set of labeled modes with their rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub labels: Vec<String>,
    pub rates: Vec<ModeRates>,
}

impl ModeSet {
    pub fn new(modes: Vec<(&str, ModeRates)>) -> Self {
        let (labels, rates) = modes.into_iter().map(|(l, r)| (l.to_string(), r)).unzip();
        Self { labels, rates }
    }

    fn index(&self, label: &str) -> Result<usize, CoolingError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| CoolingError::UnknownMode(label.to_string()))
    }

    pub fn validate(&self) -> Result<(), CoolingError> {
        if self.labels.len() != self.rates.len() {
            return Err(CoolingError::InvalidSchedule("labels and rates differ in length".into()));
        }
        for (l, r) in self.labels.iter().zip(&self.rates) {
            r.validate(l)?;
        }
        Ok(())
    }
}

struct Runner<'a> {
    modes: &'a ModeSet,
    t: f64,
    n: Vec<f64>,
    out: OccupationTrajectory,
    record: bool,
}

impl Runner<'_> {
    fn heat_all(&mut self, duration_us: f64, skip: &[usize]) {
        for (i, r) in self.modes.rates.iter().enumerate() {
            if !skip.contains(&i) {
                self.n[i] += r.heating_rate_per_s * duration_us * 1e-6;
            }
        }
    }

    fn push(&mut self) {
        if self.record {
            self.out.times_us.push(self.t);
            self.out.nbar.push(self.n.clone());
        }
    }

    fn run(&mut self, e: &ScheduleElement) -> Result<(), CoolingError> {
        match e {
            ScheduleElement::Csbc { mode, duration_us, order } => {
                let i = self.modes.index(mode)?;
                let r = &self.modes.rates[i];
                let (kappa, floor) = r.csbc(*order);
                let dt = duration_us * 1e-6;
                self.n[i] = if kappa > 0.0 {
                    let ss = floor + r.heating_rate_per_s / kappa;
                    ss + (self.n[i] - ss) * (-kappa * dt).exp()
                } else {
                    self.n[i] + r.heating_rate_per_s * dt
                };
                self.heat_all(*duration_us, &[i]);
            }
            ScheduleElement::Swap { modes: pair, duration_us, fidelity } => {
                let a = self.modes.index(&pair[0])?;
                let b = self.modes.index(&pair[1])?;
                let (na, nb) = (self.n[a], self.n[b]);
                self.n[a] = fidelity * nb + (1.0 - fidelity) * na;
                self.n[b] = fidelity * na + (1.0 - fidelity) * nb;
                self.heat_all(*duration_us, &[]);
            }
            ScheduleElement::Delay { duration_us } => self.heat_all(*duration_us, &[]),
            ScheduleElement::SimultaneousCool { wcm, scm, g_khz, duration_us, cooling } => {
                let w = self.modes.index(wcm)?;
                let s = self.modes.index(scm)?;
                let rs = &self.modes.rates[s];
                let params = cooling.unwrap_or(ContinuousCoolingParams {
                    kappa0_per_s: rs.csbc_rate_per_s,
                    linewidth_khz: None,
                    bessel: None,
                });
                let dynamics =
                    continuous_dynamics(*g_khz, &self.modes.rates[w], rs, &params);
                let st = dynamics.evolve(&MomentState::thermal(self.n[w], self.n[s]), *duration_us)?;
                self.n[w] = st.nbar_w;
                self.n[s] = st.nbar_s;
                self.heat_all(*duration_us, &[w, s]);
            }
            ScheduleElement::TrapRamp { .. } => {}
            ScheduleElement::Repeat { block, count } => {
                for _ in 0..*count {
                    for b in block {
                        self.run(b)?;
                    }
                }
                return Ok(());
            }
        }
        self.t += e.duration_us();
        self.push();
        Ok(())
    }
}

/// Run `schedule` from the `initial` occupations (aligned with `modes.labels`).
pub fn run_schedule(
    schedule: &Schedule,
    initial: &[f64],
    modes: &ModeSet,
) -> Result<OccupationTrajectory, CoolingError> {
    run_inner(schedule, initial, modes, true)
}

fn run_inner(
    schedule: &Schedule,
    initial: &[f64],
    modes: &ModeSet,
    record: bool,
) -> Result<OccupationTrajectory, CoolingError> {
    modes.validate()?;
    schedule.validate(&modes.labels)?;
    if initial.len() != modes.labels.len() || initial.iter().any(|&x| !(x >= 0.0)) {
        return Err(CoolingError::InvalidSchedule(
            "one non-negative initial occupation per mode required".into(),
        ));
    }
    let mut r = Runner {
        modes,
        t: 0.0,
        n: initial.to_vec(),
        out: OccupationTrajectory {
            modes: modes.labels.clone(),
            times_us: vec![],
            nbar: vec![],
        },
        record: true,
    };
    r.push();
    r.record = record;
    for e in &schedule.elements {
        r.run(e)?;
    }
    if !record {
        r.record = true;
        r.push();
    }
    Ok(r.out)
}

/// One schedule pass as an affine map n ↦ M n + b.
pub fn cycle_map(schedule: &Schedule, modes: &ModeSet) -> Result<(DMatrix<f64>, DVector<f64>), CoolingError> {
    let k = modes.labels.len();
    let apply = |n0: &[f64]| -> Result<Vec<f64>, CoolingError> {
        Ok(run_inner(schedule, n0, modes, false)?.final_nbar().to_vec())
    };
    let b = DVector::from_vec(apply(&vec![0.0; k])?);
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        let col = apply(&e)?;
        for i in 0..k {
            m[(i, j)] = col[i] - b[i];
        }
    }
    Ok((m, b))
}

/// Fixed point of repeating `cycle` indefinitely.
pub fn pulsed_steady_state(cycle: &Schedule, modes: &ModeSet) -> Result<Vec<f64>, CoolingError> {
    let (m, b) = cycle_map(cycle, modes)?;
    let radius = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 - 1e-12 {
        return Err(CoolingError::NoSteadyState(format!(
            "cycle map is not contracting (spectral radius {radius:.6})"
        )));
    }
    let k = m.nrows();
    let lhs = DMatrix::identity(k, k) - m;
    let n = lhs
        .lu()
        .solve(&b)
        .ok_or_else(|| CoolingError::NoSteadyState("singular cycle map".into()))?;
    Ok(n.iter().copied().collect())
}

/// Steady state n̄_min + ṅ/κ of continuous sideband cooling.
pub fn csbc_steady_state(rates: &ModeRates) -> Result<f64, CoolingError> {
    if rates.csbc_rate_per_s > 0.0 {
        Ok(rates.cooling_floor + rates.heating_rate_per_s / rates.csbc_rate_per_s)
    } else if rates.heating_rate_per_s == 0.0 {
        Err(CoolingError::NoSteadyState("undamped mode has no unique steady state".into()))
    } else {
        Err(CoolingError::NoSteadyState("undamped mode heats without bound".into()))
    }
}

/// Moment dynamics of the simultaneous scheme (rates converted to 1/µs).
pub fn continuous_dynamics(
    g_khz: f64,
    wcm: &ModeRates,
    scm: &ModeRates,
    params: &ContinuousCoolingParams,
) -> MomentDynamics {
    MomentDynamics {
        g: khz_to_rad_per_us(g_khz),
        detuning: 0.0,
        phase: 0.0,
        kappa_s: params.effective_rate(g_khz) * 1e-6,
        floor_s: scm.cooling_floor,
        heat_w: wcm.heating_rate_per_s * 1e-6,
        heat_s: scm.heating_rate_per_s * 1e-6,
    }
}

/// Simultaneous coupling and cooling, sampled at `samples + 1` equally spaced times.
pub fn continuous_cool(
    initial: &MomentState,
    g_khz: f64,
    wcm: &ModeRates,
    scm: &ModeRates,
    params: &ContinuousCoolingParams,
    duration_us: f64,
    samples: usize,
) -> Result<Vec<(f64, MomentState)>, CoolingError> {
    initial.validate()?;
    params.validate()?;
    wcm.validate("wcm")?;
    scm.validate("scm")?;
    if !(g_khz >= 0.0) || !(duration_us >= 0.0) {
        return Err(CoolingError::InvalidSchedule("g and duration must be non-negative".into()));
    }
    let dynamics = continuous_dynamics(g_khz, wcm, scm, params);
    let samples = samples.max(1);
    let dt = duration_us / samples as f64;
    let mut out = vec![(0.0, *initial)];
    let mut st = *initial;
    for k in 1..=samples {
        // Keep the drive phase continuous across sample boundaries.
        let d = MomentDynamics {
            phase: dynamics.detuning * dt * (k - 1) as f64,
            ..dynamics
        };
        st = d.evolve(&st, dt)?;
        out.push((k as f64 * dt, st));
    }
    Ok(out)
}

/// Fixed point of the simultaneous scheme.
pub fn continuous_steady_state(
    g_khz: f64,
    wcm: &ModeRates,
    scm: &ModeRates,
    params: &ContinuousCoolingParams,
) -> Result<MomentState, CoolingError> {
    let (a, b) = continuous_dynamics(g_khz, wcm, scm, params).linear_system();
    let a = Matrix4::from_fn(|i, j| a[i][j]);
    let b = Vector4::from_row_slice(&b);
    let stable = a.complex_eigenvalues().iter().all(|z| z.re < -1e-15);
    if !stable {
        return Err(CoolingError::NoSteadyState(
            "moment system has an undamped direction".into(),
        ));
    }
    let x = a
        .lu()
        .solve(&(-b))
        .ok_or_else(|| CoolingError::NoSteadyState("singular moment system".into()))?;
    Ok(MomentState {
        nbar_w: x[0],
        nbar_s: x[1],
        cross: num_complex::Complex64::new(x[2], x[3]),
    })
}

//! Equilibrium structure and normal modes of linear ion crystals.
//!
//! Each ion sits in a harmonic well: a static axial confinement shared by all
//! ions (same spring constant per unit charge) and an rf pseudopotential whose
//! strength scales as (q/m)². The static axial curvature defocuses equally in
//! x and y. Radial frequencies of the reference species are calibration
//! inputs; the pseudopotential term is inferred from them.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrystalError {
    #[error("radial frequency squared is non-positive for {species} along {axis}")]
    NonPositiveRadial { species: String, axis: Axis },
    #[error("equilibrium solver did not converge in {0} Newton steps")]
    NoConvergence(usize),
    #[error("unstable mode along {axis}: eigenvalue {eigenvalue}")]
    UnstableMode { axis: Axis, eigenvalue: f64 },
    #[error("invalid species: {0}")]
    InvalidSpecies(String),
    #[error("invalid trap: {0}")]
    InvalidTrap(String),
    #[error("invalid crystal: {0}")]
    InvalidCrystal(String),
}

/// CODATA 2018 values, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub elementary_charge: f64,
    pub atomic_mass_unit: f64,
    pub vacuum_permittivity: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: Self = Self {
        hbar: 1.054_571_817e-34,
        elementary_charge: 1.602_176_634e-19,
        atomic_mass_unit: 1.660_539_066_60e-27,
        vacuum_permittivity: 8.854_187_812_8e-12,
    };

    pub fn coulomb_constant(&self) -> f64 {
        1.0 / (4.0 * std::f64::consts::PI * self.vacuum_permittivity)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub label: String,
    /// Mass in atomic mass units.
    pub mass_u: f64,
    /// Charge in units of the elementary charge.
    pub charge: u32,
}

impl IonSpecies {
    pub fn new(label: impl Into<String>, mass_u: f64, charge: u32) -> Result<Self, CrystalError> {
        let s = Self {
            label: label.into(),
            mass_u,
            charge,
        };
        s.validate()?;
        Ok(s)
    }

    /// ⁹Be⁺, isotopic mass without electron correction.
    pub fn beryllium9() -> Self {
        Self {
            label: "Be9".into(),
            mass_u: 9.012_183_1,
            charge: 1,
        }
    }

    /// ²⁵Mg⁺, isotopic mass without electron correction.
    pub fn magnesium25() -> Self {
        Self {
            label: "Mg25".into(),
            mass_u: 24.985_837_0,
            charge: 1,
        }
    }

    /// Built-in species by label (`Be9`, `Mg25`; `Be`/`Mg` accepted).
    pub fn builtin(label: &str) -> Option<Self> {
        match label {
            "Be9" | "Be" | "9Be+" => Some(Self::beryllium9()),
            "Mg25" | "Mg" | "25Mg+" => Some(Self::magnesium25()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), CrystalError> {
        if !(self.mass_u > 0.0 && self.mass_u.is_finite()) {
            return Err(CrystalError::InvalidSpecies(format!(
                "{}: mass must be positive",
                self.label
            )));
        }
        if self.charge < 1 {
            return Err(CrystalError::InvalidSpecies(format!(
                "{}: charge must be at least 1",
                self.label
            )));
        }
        Ok(())
    }
}

/// Trap calibration in terms of a reference species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub reference: IonSpecies,
    pub axial_freq_ref_mhz: f64,
    /// Secular radial frequencies of a single reference ion.
    pub radial_freq_x_ref_mhz: f64,
    pub radial_freq_y_ref_mhz: f64,
}

impl TrapConfig {
    pub fn validate(&self) -> Result<(), CrystalError> {
        self.reference.validate()?;
        for (name, v) in [
            ("axial_freq_ref_mhz", self.axial_freq_ref_mhz),
            ("radial_freq_x_ref_mhz", self.radial_freq_x_ref_mhz),
            ("radial_freq_y_ref_mhz", self.radial_freq_y_ref_mhz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CrystalError::InvalidTrap(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Pseudopotential frequency of the reference species along x and y.
    pub fn pseudo_freqs_ref_mhz(&self) -> (f64, f64) {
        let wz2 = self.axial_freq_ref_mhz.powi(2);
        (
            (self.radial_freq_x_ref_mhz.powi(2) + 0.5 * wz2).sqrt(),
            (self.radial_freq_y_ref_mhz.powi(2) + 0.5 * wz2).sqrt(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalConfig {
    /// Ions in order along +z.
    pub species_order: Vec<IonSpecies>,
}

impl CrystalConfig {
    pub const MAX_IONS: usize = 10;

    pub fn new(species_order: Vec<IonSpecies>) -> Result<Self, CrystalError> {
        let c = Self { species_order };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.species_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species_order.is_empty()
    }

    pub fn validate(&self) -> Result<(), CrystalError> {
        if self.species_order.is_empty() {
            return Err(CrystalError::InvalidCrystal(
                "species_order must be non-empty".into(),
            ));
        }
        if self.species_order.len() > Self::MAX_IONS {
            return Err(CrystalError::InvalidCrystal(format!(
                "at most {} ions supported, got {}",
                Self::MAX_IONS,
                self.species_order.len()
            )));
        }
        self.species_order.iter().try_for_each(IonSpecies::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    pub axis: Axis,
    pub frequency_mhz: f64,
    /// Mass-weighted, normalized eigenvector components, one per ion.
    pub participation: Vec<f64>,
}

impl Mode {
    pub fn angular_frequency(&self) -> f64 {
        TAU * self.frequency_mhz * 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTable {
    pub ions: Vec<IonSpecies>,
    /// Sorted by (axis, frequency).
    pub modes: Vec<Mode>,
    pub equilibrium_positions_um: Vec<f64>,
}

impl ModeTable {
    pub fn mode(&self, label: &str) -> Option<&Mode> {
        self.modes.iter().find(|m| m.label == label)
    }

    pub fn modes_along(&self, axis: Axis) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(move |m| m.axis == axis)
    }

    pub fn num_ions(&self) -> usize {
        self.ions.len()
    }
}

/// Single-ion secular frequencies `[ω_x, ω_y, ω_z]` (MHz) of `species` in `trap`.
pub fn single_ion_frequencies(
    species: &IonSpecies,
    trap: &TrapConfig,
) -> Result<[f64; 3], CrystalError> {
    species.validate()?;
    trap.validate()?;
    let reference = &trap.reference;
    let mass_ratio = reference.mass_u / species.mass_u;
    let charge_ratio = species.charge as f64 / reference.charge as f64;

    let wz2 = trap.axial_freq_ref_mhz.powi(2) * charge_ratio * mass_ratio;
    let pseudo_scale = (charge_ratio * mass_ratio).powi(2);
    let (px, py) = trap.pseudo_freqs_ref_mhz();

    let mut out = [0.0, 0.0, wz2.sqrt()];
    for (axis, p) in [(Axis::X, px), (Axis::Y, py)] {
        let w2 = pseudo_scale * p * p - 0.5 * wz2;
        if w2 <= 0.0 {
            return Err(CrystalError::NonPositiveRadial {
                species: species.label.clone(),
                axis,
            });
        }
        out[axis.index()] = w2.sqrt();
    }
    Ok(out)
}

/// Characteristic length ℓ (m) with ℓ³ = k_e e² / (m_ref ω_z,ref²).
fn length_scale(trap: &TrapConfig, k: &PhysicalConstants) -> f64 {
    let m = trap.reference.mass_u * k.atomic_mass_unit;
    let w = TAU * trap.axial_freq_ref_mhz * 1e6;
    let zref = trap.reference.charge as f64;
    (k.coulomb_constant() * (zref * k.elementary_charge).powi(2) / (m * w * w)).cbrt()
}

/// Dimensionless axial force on each ion (units of k_ref ℓ).
fn axial_forces(u: &[f64], spring: &[f64], charge: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|j| {
            let coulomb: f64 = (0..n)
                .filter(|&i| i != j)
                .map(|i| {
                    let d = u[j] - u[i];
                    charge[i] * charge[j] * d.signum() / (d * d)
                })
                .sum();
            coulomb - spring[j] * u[j]
        })
        .collect()
}

fn axial_hessian(u: &[f64], spring: &[f64], charge: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        h[(j, j)] = spring[j];
        for i in 0..n {
            if i != j {
                let c = charge[i] * charge[j] / (u[j] - u[i]).abs().powi(3);
                h[(j, j)] += 2.0 * c;
                h[(j, i)] = -2.0 * c;
            }
        }
    }
    h
}

struct Equilibrium {
    /// Dimensionless positions (units of ℓ).
    u: Vec<f64>,
    length_scale_m: f64,
}

const NEWTON_MAX_STEPS: usize = 200;
const FORCE_TOL: f64 = 1e-12;

fn solve_equilibrium(
    crystal: &CrystalConfig,
    trap: &TrapConfig,
    k: &PhysicalConstants,
) -> Result<Equilibrium, CrystalError> {
    crystal.validate()?;
    trap.validate()?;
    let n = crystal.len();
    let zref = trap.reference.charge as f64;
    let charge: Vec<f64> = crystal
        .species_order
        .iter()
        .map(|s| s.charge as f64 / zref)
        .collect();
    // Axial spring constant per ion, in units of k_ref, scales with charge.
    let spring = charge.clone();

    let spacing = 2.018 / (n as f64).powf(0.559);
    let mut u: Vec<f64> = (0..n)
        .map(|j| spacing * (j as f64 - 0.5 * (n as f64 - 1.0)))
        .collect();

    let norm = |f: &[f64]| f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut f = axial_forces(&u, &spring, &charge);
    let mut converged = norm(&f) < FORCE_TOL;
    for _ in 0..NEWTON_MAX_STEPS {
        if converged {
            break;
        }
        let h = axial_hessian(&u, &spring, &charge);
        let rhs = nalgebra::DVector::from_vec(f.clone());
        // Forces are −∇V, so the Newton step solves H Δu = F.
        let step = h
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| h.lu().solve(&rhs))
            .ok_or(CrystalError::NoConvergence(NEWTON_MAX_STEPS))?;

        let f0 = norm(&f);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + lambda * b).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let ft = axial_forces(&trial, &spring, &charge);
                if norm(&ft) < f0 || lambda < 1e-6 {
                    u = trial;
                    f = ft;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(CrystalError::NoConvergence(NEWTON_MAX_STEPS));
            }
        }
        converged = norm(&f) < FORCE_TOL;
    }
    if !converged {
        return Err(CrystalError::NoConvergence(NEWTON_MAX_STEPS));
    }
    Ok(Equilibrium {
        u,
        length_scale_m: length_scale(trap, k),
    })
}

/// Equilibrium positions (µm along z) of the crystal in the trap.
pub fn equilibrium_positions(
    crystal: &CrystalConfig,
    trap: &TrapConfig,
) -> Result<Vec<f64>, CrystalError> {
    let eq = solve_equilibrium(crystal, trap, &PhysicalConstants::CODATA_2018)?;
    Ok(eq.u.iter().map(|u| u * eq.length_scale_m * 1e6).collect())
}

/// Full 3N normal-mode decomposition of the crystal.
pub fn mode_table(crystal: &CrystalConfig, trap: &TrapConfig) -> Result<ModeTable, CrystalError> {
    let k = PhysicalConstants::CODATA_2018;
    let eq = solve_equilibrium(crystal, trap, &k)?;
    let n = crystal.len();
    let ions = &crystal.species_order;
    let zref = trap.reference.charge as f64;
    let charge: Vec<f64> = ions.iter().map(|s| s.charge as f64 / zref).collect();
    let mu: Vec<f64> = ions
        .iter()
        .map(|s| s.mass_u / trap.reference.mass_u)
        .collect();
    let single: Vec<[f64; 3]> = ions
        .iter()
        .map(|s| single_ion_frequencies(s, trap))
        .collect::<Result<_, _>>()?;
    let wz_ref = trap.axial_freq_ref_mhz;

    let mut modes = Vec::with_capacity(3 * n);
    for axis in Axis::ALL {
        // Stiffness matrix in units of k_ref = m_ref ω_z,ref².
        let stiffness = match axis {
            Axis::Z => axial_hessian(&eq.u, &charge, &charge),
            Axis::X | Axis::Y => {
                let mut h = DMatrix::zeros(n, n);
                for j in 0..n {
                    let w = single[j][axis.index()] / wz_ref;
                    h[(j, j)] = mu[j] * w * w;
                    for i in 0..n {
                        if i != j {
                            let c = charge[i] * charge[j] / (eq.u[j] - eq.u[i]).abs().powi(3);
                            h[(j, j)] -= c;
                            h[(j, i)] = c;
                        }
                    }
                }
                h
            }
        };
        let weighted =
            DMatrix::from_fn(n, n, |i, j| stiffness[(i, j)] / (mu[i] * mu[j]).sqrt());
        let eig = SymmetricEigen::new(weighted);

        let mut axis_modes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
        for m in 0..n {
            let lambda = eig.eigenvalues[m];
            if lambda <= 0.0 {
                return Err(CrystalError::UnstableMode {
                    axis,
                    eigenvalue: lambda,
                });
            }
            let mut v: Vec<f64> = eig.eigenvectors.column(m).iter().copied().collect();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            axis_modes.push((lambda.sqrt() * wz_ref, v));
        }
        axis_modes.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| a.1.partial_cmp(&b.1).unwrap())
        });
        let labels = mode_labels(axis, ions, &axis_modes);
        for ((f, v), label) in axis_modes.into_iter().zip(labels) {
            modes.push(Mode {
                label,
                axis,
                frequency_mhz: f,
                participation: v,
            });
        }
    }

    Ok(ModeTable {
        ions: ions.clone(),
        modes,
        equilibrium_positions_um: eq.u.iter().map(|u| u * eq.length_scale_m * 1e6).collect(),
    })
}

/// Conventional names: single ion `x`,`y`,`z`; two ions `{a}c` for the
/// in-phase mode and `{a}s`/`{a}r` (same species) or `{a}o` (mixed) for the
/// out-of-phase one; three ions `ip`/`st`/`al` (prefixed by the axis letter
/// for radial modes). Anything else falls back to `{a}{index}`.
fn mode_labels(axis: Axis, ions: &[IonSpecies], modes: &[(f64, Vec<f64>)]) -> Vec<String> {
    let a = axis.letter();
    let n = ions.len();
    let fallback = || (0..modes.len()).map(|i| format!("{a}{i}")).collect::<Vec<_>>();
    let same_sign = |v: &[f64]| v.iter().all(|x| *x > 1e-12) || v.iter().all(|x| *x < -1e-12);
    let labels: Vec<String> = match n {
        1 => vec![a.to_string()],
        2 => {
            let same_species = ions[0].label == ions[1].label;
            modes
                .iter()
                .map(|(_, v)| {
                    if same_sign(v) {
                        format!("{a}c")
                    } else if !same_species {
                        format!("{a}o")
                    } else if axis == Axis::Z {
                        "zs".to_string()
                    } else {
                        format!("{a}r")
                    }
                })
                .collect()
        }
        3 => {
            let prefix = if axis == Axis::Z { String::new() } else { a.to_string() };
            modes
                .iter()
                .map(|(_, v)| {
                    let name = if same_sign(v) {
                        "ip"
                    } else if v[1].abs() < 1e-9 {
                        "st"
                    } else {
                        "al"
                    };
                    format!("{prefix}{name}")
                })
                .collect()
        }
        _ => return fallback(),
    };
    let mut sorted = labels.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() == labels.len() {
        labels
    } else {
        fallback()
    }
}

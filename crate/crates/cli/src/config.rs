//! Run configuration: one JSON document per invocation.

use modecool::cooling::{ContinuousCoolingParams, ModeRates, ScheduleElement};
use modecool::crystal::IonSpecies;
use modecool::spectro::{FreqScanParams, RabiParams, TimeScanParams};
use serde::Deserialize;
use std::collections::BTreeMap;

#[derive(Debug, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Modes(ModesConfig),
    CoupleScan(ScanConfig),
    Cool(CoolConfig),
    Spectrum(SpectrumConfig),
    Fit(FitConfig),
}

/// A built-in species name ("Be9", "Mg25") or an explicit species.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpeciesSpec {
    Builtin(String),
    Custom(IonSpecies),
}

impl SpeciesSpec {
    pub fn resolve(&self) -> Result<IonSpecies, String> {
        match self {
            Self::Builtin(name) => IonSpecies::builtin(name)
                .ok_or_else(|| format!("unknown species '{name}' (built-in: Be9, Mg25)")),
            Self::Custom(s) => s.validate().map(|_| s.clone()).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CrystalSpec {
    pub species_order: Vec<SpeciesSpec>,
}

#[derive(Debug, Deserialize)]
pub struct TrapSpec {
    pub reference: SpeciesSpec,
    pub axial_freq_ref_mhz: f64,
    pub radial_freq_x_ref_mhz: f64,
    pub radial_freq_y_ref_mhz: f64,
}

#[derive(Debug, Deserialize)]
pub struct ModesConfig {
    pub crystal: CrystalSpec,
    pub trap: TrapSpec,
}

/// Evenly spaced points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    101
}

impl Grid {
    pub fn values(&self, name: &str) -> Result<Vec<f64>, String> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(format!("{name}: start and stop must be finite"));
        }
        if self.stop < self.start {
            return Err(format!("{name}: stop must not be below start"));
        }
        if self.start == self.stop {
            return Ok(vec![self.start]);
        }
        if self.points < 2 {
            return Err(format!("{name}: points must be at least 2 for a grid of non-zero width"));
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| if i + 1 == self.points { self.stop } else { self.start + step * i as f64 })
            .collect())
    }
}

/// Error bars written alongside model values; `noise` adds seeded
/// Gaussian draws of that width.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct Noise {
    pub sigma: f64,
    #[serde(default)]
    pub noise: bool,
}

#[derive(Debug, Deserialize)]
pub struct ScanConfig {
    pub scan: ScanSpec,
    #[serde(default)]
    pub error_bars: Option<Noise>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Single-quantum transfer probability p₀₁.
    Transfer,
    DarkW,
    DarkS,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Sweep {
    /// Drive frequency in MHz at fixed duration.
    Frequency { grid: Grid, duration_us: f64 },
    /// Duration in µs at fixed detuning.
    Duration {
        grid: Grid,
        #[serde(default)]
        detuning_khz: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ScanSpec {
    FreqScan { params: FreqScanParams, grid: Grid },
    TimeScan { params: TimeScanParams, grid: Grid },
    Exchange {
        g_khz: f64,
        /// Drive frequency of the resonance δ_ws (MHz); frequency sweeps are relative to it.
        #[serde(default)]
        resonance_mhz: f64,
        #[serde(default)]
        drive_phase_rad: f64,
        observable: Observable,
        /// Include the two-ion correction terms in dark counts.
        #[serde(default)]
        exact: bool,
        sweep: Sweep,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct ModeEntry {
    pub label: String,
    pub rates: ModeRates,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum CoolConfig {
    Pulsed {
        modes: Vec<ModeEntry>,
        initial_nbar: Vec<f64>,
        #[serde(default)]
        cycle: Option<Vec<ScheduleElement>>,
        /// Schedule document (JSON list of elements or `{"elements": [...]}`).
        #[serde(default)]
        cycle_path: Option<String>,
        #[serde(default = "one")]
        repetitions: u32,
    },
    Continuous {
        wcm: ModeEntry,
        scm: ModeEntry,
        cooling: ContinuousCoolingParams,
        initial_nbar: [f64; 2],
        g_khz: f64,
        duration_us: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    ContinuousSweep {
        wcm: ModeEntry,
        scm: ModeEntry,
        cooling: ContinuousCoolingParams,
        initial_nbar: [f64; 2],
        /// Grid over r₀ = 2g (kHz).
        r0_khz: Grid,
        duration_us: f64,
    },
}

fn one() -> u32 {
    1
}

fn default_samples() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumConfig {
    /// Stretch-mode sideband spectrum with cross-Kerr shifts. `params`
    /// overrides fields of the Be⁺-Be⁺ defaults.
    Kerr {
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
        /// Offsets from f_rsb in kHz.
        offset_khz: Grid,
        #[serde(default)]
        error_bars: Option<Noise>,
    },
    /// |J₀(Δk β r₀)| for one or more β.
    Bessel {
        #[serde(default)]
        dk_per_m: Option<f64>,
        beta_nm_per_khz: Vec<f64>,
        r0_khz: Grid,
    },
    /// Red-sideband Rabi rates for n = 0..=n_max.
    RsbRabi { rabi: RabiParams, n_max: usize },
}

#[derive(Debug, Deserialize)]
pub struct FitConfig {
    /// CSV with columns x, y, sigma.
    pub data: String,
    /// freq_scan, time_scan, line, kerr_occupations or heating.
    pub model: String,
    #[serde(default)]
    pub guess: BTreeMap<String, f64>,
    #[serde(default)]
    pub bounds: BTreeMap<String, [Option<f64>; 2]>,
    /// Overrides of the fixed Kerr parameters for kerr_occupations.
    #[serde(default)]
    pub kerr: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
}

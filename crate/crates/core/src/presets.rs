//! Crystal, trap and cooling settings for the Be⁺/Mg⁺ crystals studied in
//! the experiments this library models, plus the published fit rows.
//!
//! Trap frequencies are the reference-species values that reproduce the
//! measured mode frequencies; radial values for the three-ion crystal were
//! not reported and are only chosen to keep the chain linear.

use crate::cooling::{ModeRates, ModeSet, Schedule, ScheduleElement};
use crate::crystal::{CrystalConfig, IonSpecies, TrapConfig};
use crate::spectro::{FreqScanParams, TimeScanParams};

fn be_trap(axial: f64, x: f64, y: f64) -> TrapConfig {
    TrapConfig {
        reference: IonSpecies::beryllium9(),
        axial_freq_ref_mhz: axial,
        radial_freq_x_ref_mhz: x,
        radial_freq_y_ref_mhz: y,
    }
}

fn crystal(labels: &[&str]) -> CrystalConfig {
    CrystalConfig {
        species_order: labels
            .iter()
            .map(|l| IonSpecies::builtin(l).expect("builtin species"))
            .collect(),
    }
}

/// Be⁺-Be⁺: zs 6.304, xr 7.483, yr 6.437 MHz.
pub fn be_be() -> (CrystalConfig, TrapConfig) {
    let wz = 6.304 / 3f64.sqrt();
    (
        crystal(&["Be9", "Be9"]),
        be_trap(wz, 7.483f64.hypot(wz), 6.437f64.hypot(wz)),
    )
}

/// Be⁺-Mg⁺: zo 4.722 MHz; Mg-dominated radial modes near 4.48 (x) and 4.04 (y) MHz.
pub fn be_mg() -> (CrystalConfig, TrapConfig) {
    (crystal(&["Be9", "Mg25"]), be_trap(3.15653, 13.3179, 12.1918))
}

/// Be⁺-Mg⁺-Be⁺: axial ip 1.501, st 3.374, al 3.655 MHz.
pub fn be_mg_be() -> (CrystalConfig, TrapConfig) {
    (crystal(&["Be9", "Mg25", "Be9"]), be_trap(3.374 / 3f64.sqrt(), 12.0, 11.0))
}

/// One row of a published fit table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqScanRow {
    pub crystal: &'static str,
    pub coupled: &'static str,
    pub measured: &'static str,
    pub params: FreqScanParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScanRow {
    pub crystal: &'static str,
    pub coupled: &'static str,
    pub measured: &'static str,
    pub params: TimeScanParams,
}

const fn fs(a: f64, r0: f64, tau: f64, d: f64, p0: f64) -> FreqScanParams {
    FreqScanParams {
        a,
        r0_khz: r0,
        tau_us: tau,
        delta_ws_mhz: d,
        p0,
    }
}

/// The decay column is a 1/e time in ms; γ is its inverse.
const fn ts(a: f64, r0: f64, phi: f64, decay_ms: f64, y0: f64) -> TimeScanParams {
    TimeScanParams {
        a,
        r0_khz: r0,
        phi_rad: phi,
        gamma_per_ms: 1.0 / decay_ms,
        y0,
    }
}

pub const FREQ_SCAN_ROWS: [FreqScanRow; 6] = [
    FreqScanRow { crystal: "Be-Be", coupled: "zs-yr", measured: "zs", params: fs(1.2, 7.0, 67.0, 0.1394, 0.07) },
    FreqScanRow { crystal: "Be-Be", coupled: "zs-yr", measured: "yr", params: fs(-1.29, 8.0, 65.0, 0.1393, 1.36) },
    FreqScanRow { crystal: "Be-Be", coupled: "zs-xr", measured: "zs", params: fs(1.1, 4.0, 96.0, 0.1386, 0.21) },
    FreqScanRow { crystal: "Be-Be", coupled: "zs-xr", measured: "xr", params: fs(-1.1, 3.6, 84.0, 0.1386, 1.34) },
    FreqScanRow { crystal: "Be-Mg", coupled: "zo-yo", measured: "zo", params: fs(-0.79, 5.2, 101.0, 0.7116, 0.944) },
    FreqScanRow { crystal: "Be-Mg", coupled: "zo-xo", measured: "zo", params: fs(-0.97, 5.4, 98.0, 0.2485, 0.976) },
];

pub const TIME_SCAN_ROWS: [TimeScanRow; 6] = [
    TimeScanRow { crystal: "Be-Be", coupled: "zs-yr", measured: "zs", params: ts(1.20, 7.84, -1.38, 1.5, 0.67) },
    TimeScanRow { crystal: "Be-Be", coupled: "zs-yr", measured: "yr", params: ts(1.34, 7.91, 1.66, 2.6, 0.69) },
    TimeScanRow { crystal: "Be-Be", coupled: "zs-xr", measured: "zs", params: ts(1.12, 4.70, -1.42, 1.3, 0.68) },
    TimeScanRow { crystal: "Be-Be", coupled: "zs-xr", measured: "xr", params: ts(1.10, 4.77, 1.64, 3.7, 0.78) },
    TimeScanRow { crystal: "Be-Mg", coupled: "zo-yo", measured: "zo", params: ts(0.78, 10.1, 1.58, 1.4, 0.514) },
    TimeScanRow { crystal: "Be-Mg", coupled: "zo-xo", measured: "zo", params: ts(0.88, 10.5, 1.42, 16.0, 0.502) },
];

/// Measured heating rates of the Be⁺-Mg⁺ out-of-phase modes (quanta/s).
pub const BE_MG_HEATING: [(&str, f64); 3] = [("xo", 5.0), ("yo", 330.0), ("zo", 20.0)];

/// Sideband cooling rate and floor of the directly cooled zo mode, calibrated
/// so that repeated cycles settle near the measured occupations.
pub const BE_MG_ZO_CSBC_PER_S: f64 = 1.1e4;
pub const BE_MG_ZO_FLOOR: f64 = 0.02;

/// Rates for the Be⁺-Mg⁺ out-of-phase modes; only zo is cooled directly.
pub fn be_mg_modes() -> ModeSet {
    ModeSet::new(vec![
        ("xo", ModeRates::heating_only(5.0)),
        ("yo", ModeRates::heating_only(330.0)),
        ("zo", ModeRates::cooled(20.0, BE_MG_ZO_CSBC_PER_S, BE_MG_ZO_FLOOR)),
    ])
}

/// One 455 µs cooling cycle: zo is cooled, xo and yo are swapped into it
/// and cooled in turn, and the in-phase pulse (not tracked) ends the cycle.
pub fn be_mg_cycle() -> Schedule {
    let csbc = || ScheduleElement::Csbc {
        mode: "zo".into(),
        duration_us: 75.0,
        order: 1,
    };
    let swap = |other: &str| ScheduleElement::Swap {
        modes: ["zo".into(), other.into()],
        duration_us: 50.0,
        fidelity: 0.99,
    };
    Schedule::new(vec![
        csbc(),
        swap("xo"),
        csbc(),
        swap("yo"),
        csbc(),
        ScheduleElement::Delay { duration_us: 130.0 },
    ])
}

//! Simulation and estimation toolkit for parametric coupling and indirect
//! cooling of normal modes in linear mixed-species trapped-ion crystals.
//!
//! Units used throughout the public API:
//!
//! * mode frequencies in MHz, coupling and exchange rates in kHz (both are
//!   ordinary frequencies, i.e. angular rate / 2π),
//! * times in µs,
//! * heating and cooling rates in 1/s (quanta/s for heating).
//!
//! Internally, dynamics are integrated in rad/µs.

pub mod cooling;
pub mod crystal;
pub mod exchange;
pub mod fields;
pub mod fitkit;
pub mod ode;
pub mod presets;
pub mod special;
pub mod spectro;
pub mod units;

pub use cooling::{
    ContinuousCoolingParams, ModeRates, OccupationTrajectory, Schedule, ScheduleElement,
};
pub use crystal::{CrystalConfig, IonSpecies, Mode, ModeTable, PhysicalConstants, TrapConfig};
pub use exchange::{ExchangeParams, MomentState, TwoModeFockState};
pub use fields::{CouplingDrive, ElectrodeBasis, FieldExpansion, FilterModel, PulseEnvelope};
pub use fitkit::{FitResult, ScanData};
pub use spectro::{
    DetectionCalibration, FreqScanParams, KerrSpectrumParams, RabiParams, TimeScanParams,
};

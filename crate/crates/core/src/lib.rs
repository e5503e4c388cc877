//! Reconstruction of photon-number distributions from the "no click" statistics
//! of a single on/off detector that sees the signal mixed with thermal probe
//! light of varying intensity.
//!
//! The crate is organised bottom-up:
//!
//! * [`fock`] holds Fock-space primitives: photon-number distributions, thermal
//!   diagonals and the two-mode beam-splitter unitary (with a matrix-exponential
//!   cross-check in [`fock::bs_unitary_oracle`]).
//! * [`povm`] builds the no-click POVM matrices for the three measurement models.
//! * [`calibration`] turns blocked-signal and signal-only counts into probe means
//!   and per-setting detector efficiencies.
//! * [`nnls`] is a KKT-certified active-set non-negative least-squares solver.
//! * [`reconstruction`] inverts click records into a distribution, with bootstrap
//!   uncertainty.
//! * [`simulator`] generates synthetic experiments, and [`measurement`] reads and
//!   writes the measurement file format shared with the CLI.

pub mod calibration;
pub mod error;
pub mod fock;
pub mod measurement;
pub mod nnls;
pub mod povm;
pub mod reconstruction;
pub mod simulator;

pub use calibration::ClickRecord;
pub use error::{Error, ErrorCategory, Result};
pub use fock::{BsUnitary, PhotonDistribution, ProbeCutoff, SchemeParams, ThermalDiagonal};
pub use povm::{PovmMatrix, PovmModel, ProbeSetting};
pub use reconstruction::{
    BootstrapStats, Normalization, ReconstructionOptions, ReconstructionResult, Weighting,
};
pub use simulator::{DriftProfile, ExperimentPlan};

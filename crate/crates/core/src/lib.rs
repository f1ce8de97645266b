//! Simulation and analysis of super-twisting sliding-mode (STSMC) loops driven
//! by periodic perturbations whose rate exceeds the integral gain.
//!
//! When `k2 < L` finite-time convergence is lost, but for fast periodic
//! perturbations the regularised closed loop settles onto a stable limit cycle
//! with the period of the perturbation. This crate provides:
//!
//! - [`perturbations`]: harmonic perturbation models `d(t)` and their rates `q(t)`.
//! - [`vector_fields`]: the discontinuous, regularised and averaged closed-loop fields.
//! - [`integrator`]: fixed-step RK4 integration with divergence detection and crossing events.
//! - [`analysis`]: gain conditions, return-map limit-cycle detection, amplitude bounds and sweeps.
//! - [`tuning`]: constrained search for gains that meet an amplitude target.
//! - [`scenarios`]: the motor-velocity loop with torque ripple and reference gain tables.

pub mod analysis;
pub mod error;
pub mod integrator;
pub mod perturbations;
pub mod scenarios;
pub mod tuning;
pub mod vector_fields;

pub use analysis::cycle::{detect_limit_cycle, simulate_cycle, CycleOptions, CycleRun, LimitCycleReport};
pub use analysis::BoundSet;
pub use error::{Error, Result};
pub use integrator::{integrate, CrossingEvent, SimConfig, Trajectory};
pub use perturbations::{Harmonic, Perturbation, PerturbationSpec};
pub use tuning::{tune_gains, TuningProblem, TuningResult};
pub use vector_fields::{FieldKind, Gains, RegWidth, State, WState};

/// Version string recorded in every emitted report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the JSON/CSV schemas read and written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

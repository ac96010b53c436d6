//! Delayed quasispecies dynamics with periodic replication rates.
//!
//! The crate integrates the delay system, solves the time-averaged algebraic
//! system with Jacobian-sign (degree) accounting, searches for periodic
//! orbits, and packages the invariance and existence results as an
//! executable verification suite.

pub mod averaging;
pub mod config;
pub mod dde;
pub mod error;
pub mod growth;
pub mod model;
pub mod periodic;
pub mod signal;
pub mod verify;

pub use error::{AveragingError, IntegrateError, ModelError, PeriodicError};
pub use growth::{GrowthFunction, GrowthKind};
pub use model::{ModelSpec, StateVector, ValidationReport};
pub use signal::PeriodicSignal;

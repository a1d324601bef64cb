//! Quantum lattice gas solver for the three-dimensional Gross-Pitaevskii
//! equation, with vortex initial states, spectral and recurrence diagnostics,
//! the Arnold cat map, and the file formats of the `qlg` tool.

pub mod catmap;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod initcond;
pub mod lattice;
pub mod reduce;
pub mod runner;
pub mod snapshot;
pub mod spectral;

pub use error::{QlgError, Result};
pub use evolution::{evolve_step, SimParams};
pub use lattice::{Axis, GridSpec, Pair, ScalarField, SpinorField, VectorField};

//! Finite-dimensional quantum measurement theory toolkit.
//!
//! Everything is built on dense complex matrices over discretized
//! position/momentum grids: states, effects and POVMs, completely positive
//! instruments in Kraus form, full measurement schemes (probe + coupling +
//! pointer), operational error measures, and numerical verifiers for the
//! joint-measurement uncertainty relations.

pub mod error_measures;
pub mod grid;
pub mod instruments;
pub mod joint;
pub mod scenario;
pub mod observables;
pub mod schemes;
pub mod hilbert;

pub use grid::OutcomeGrid;
pub use hilbert::{Effect, Operator, State};

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid effect: {0}")]
    InvalidEffect(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

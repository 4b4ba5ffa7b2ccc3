//! Radial spectral laboratory for the intercritical nonlinear Schrödinger
//! equation with an inverse-square potential.
//!
//! The crate computes Gagliardo–Nirenberg ground states and the associated
//! sharp constants and dichotomy thresholds, integrates the radial equation
//! by Strang splitting with exact sub-flows, and evaluates the virial,
//! coercivity, and classification diagnostics that decide the fate
//! (scattering vs. finite-time blowup) of a given initial datum.

pub mod config;
pub mod diagnostics;
pub mod evolve;
pub mod grid;
pub mod groundstate;
pub mod params;
pub mod runner;
mod transform;

pub use grid::{Observables, RadialField, RadialGrid};
pub use params::{Exponents, ProblemSpec, RegimeReport, Sign};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Params(#[from] params::ParamsError),
    #[error("grid error: {0}")]
    Grid(#[from] grid::GridError),
    #[error("ground-state solve failed: {0}")]
    GroundState(#[from] groundstate::SolveError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

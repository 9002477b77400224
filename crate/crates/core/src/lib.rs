//! Dipolar condensate dynamics and optimal control of droplet formation.
//!
//! The crate evolves the generalized Gross-Pitaevskii equation (contact,
//! dipolar, quantum-fluctuation and three-body-loss terms) with a Strang
//! split-step spectral method, evaluates the dipolar potential with a
//! spectrally accurate truncated-kernel convolution, and optimizes the
//! scattering length and trap frequencies through a multilevel cubic
//! B-spline parameterization under box constraints.

pub mod bspline;
pub mod config;
pub mod control;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod model;
pub mod observables;
pub mod optimizer;
pub mod solver;
pub mod units;
pub mod workflow;

pub use error::{Error, Result};

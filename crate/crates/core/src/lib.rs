//! Bayesian dynamic effective-connectivity models.
//!
//! Random-walk, AR(1) and Dirichlet-process models for time-varying
//! connectivity between regional series, fitted by a collapsed Gibbs sampler.

pub mod base_measure;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod signal;
pub mod simulate;

pub use error::{Error, Result};

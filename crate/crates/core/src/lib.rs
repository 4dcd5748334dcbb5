//! Simulation and field inversion for saturated absorption spectroscopy of
//! Rb-87 in the hyperfine Paschen-Back regime.
//!
//! * [`atomic`] builds the |m_I, m_J> Hamiltonians and transition tables.
//! * [`obe`] integrates the reduced optical Bloch equations and averages
//!   them over the Maxwell-Boltzmann velocity distribution.
//! * [`analysis`] turns raw scan traces into calibrated spectra and fits
//!   line centers.
//! * [`estimator`] inverts line centers to a field with Monte Carlo errors.
//! * [`io`] holds configs, file formats and the command drivers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atomic;
pub mod error;
pub mod estimator;
pub mod halfint;
pub mod io;
pub mod obe;

pub use error::{Error, Result};
pub use halfint::HalfInt;

//! Differentiable quantum phase estimation at desk scale.
//!
//! Exact QPE readout distributions, the smooth generalized circular
//! estimator, closed-form statistics, gradients of estimated energies with
//! respect to Hamiltonian parameters, and molecular geometry optimization
//! on small s-orbital systems.

pub mod chem;
pub mod error;
pub mod estimator;
pub mod gradients;
pub mod optimizer;
pub mod qpe;
pub mod sampling;
pub mod spectral;
pub mod statistics;

pub use error::{Error, Result};

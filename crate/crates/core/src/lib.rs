//! Stein's method for targets that are invariant measures of diffusions.
//!
//! The crate covers the one-dimensional side (diffusion coefficient, Stein
//! factors, the Stein solution and its bounds), the Gaussian side (second-order
//! Wiener chaos in finite coordinates, Malliavin derivatives, `(-L)^{-1}` through
//! the Mehler formula) and the comparison side (exact empirical Wasserstein-1).

pub mod chaos;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod expr;
pub mod mc;
pub mod measure;
pub mod quadrature;
pub mod report;
pub mod selftest;
pub mod stein;
pub mod transport;

pub use error::{Error, Result};

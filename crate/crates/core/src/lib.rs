//! Fractional integral operators of Erdélyi–Kober type on the cone of real
//! positive-definite matrices, evaluated through their representation as
//! densities of matrix products and ratios.
//!
//! Modules, bottom up:
//! - [`pdcore`]: symmetric and positive-definite matrices.
//! - [`special`]: Γ_p, B_p, partition Pochhammer symbols, Stirling terms.
//! - [`zonal`]: partitions, zonal polynomials, hypergeometric series.
//! - [`quadrature`]: scalar adaptive quadrature used as the p = 1 oracle.
//! - [`sampling`]: samplers and the reproducible Monte Carlo engine.
//! - [`densities`]: the matrix-variate density catalog and test functions.
//! - [`operators`]: Kober, Weyl, Riemann–Liouville, pathway and
//!   hypergeometric operators.
//! - [`mtransform`]: M-transforms and identity verification.
//! - [`cli`]: configuration, suites and report files behind the binary.

pub mod cli;
pub mod densities;
pub mod error;
pub mod mtransform;
pub mod operators;
pub mod pdcore;
pub mod quadrature;
pub mod sampling;
pub mod special;
pub mod zonal;

pub use error::{Error, Result};
pub use pdcore::{PDMatrix, SymMatrix};
pub use sampling::{EstimatorResult, RngStream};
pub use zonal::Partition;

//! Conditional-expectation estimators.
//!
//! The pathwise engine integrates value functions against the Gaussian law of
//! ΔW_i with Gauss–Hermite quadrature; [`lsmc`] provides the regression
//! alternative used for cross-validation.

pub mod lsmc;
pub mod quadrature;
pub mod value_function;

use thiserror::Error;

pub use lsmc::{lsmc_fit, lsmc_predict, Design, PolynomialBasis, RegressionFit};
pub use quadrature::{
    expect_gaussian, gauss_hermite_rule, GaussianExpectation, GridExpectations, GridQuadrature,
    QuadratureRule,
};
pub use value_function::{GridSpec, Interpolation, UniformGrid, ValueFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("Gauss-Hermite node count must lie in 1..=64, got {0}")]
    NodeCount(usize),
    #[error("Newton iteration for Gauss-Hermite node {0} did not converge")]
    RootNotConverged(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("value count {values} does not match grid node count {nodes}")]
    GridMismatch { values: usize, nodes: usize },
    #[error("{samples} samples cannot determine {basis} basis coefficients")]
    TooFewSamples { samples: usize, basis: usize },
    #[error("state and target lengths differ ({states} vs {targets})")]
    LengthMismatch { states: usize, targets: usize },
    #[error("design matrix rank deficient: smallest singular value {smallest:e} < 1e-10 × largest {largest:e}")]
    RankDeficient { smallest: f64, largest: f64 },
}

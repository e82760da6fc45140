//! Implicit time stepping for backward doubly stochastic differential
//! equations driven by two independent Brownian motions W (forward) and B
//! (backward), with closed-form and Monte Carlo oracles for linear problems
//! and harnesses for convergence-rate and Hölder-regularity studies.

// Validation is written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod condexp;
pub mod oracle;
pub mod paths;
pub mod problem;
pub mod report;
pub mod scheme;
pub mod stats;

pub use problem::{
    build_uniform_partition, validate_mesh_condition, BackwardCoeff, Forcing, Generator,
    MeshPairing, Partition, ProblemError, ProblemSpec, Terminal,
};

//! The implicit backward recursion
//!
//! ```text
//! Y_n = ξ^π,  Z_n = 0
//! Z_i = E[(Y_{i+1} + g(Y_{i+1}) ΔB_i) ΔW_i | F_{t_i}] / Δ_i
//! Y_i = E[ Y_{i+1} + g(Y_{i+1}) ΔB_i      | F_{t_i}] + f(t_i, Y_i, Z_i) Δ_i
//! ```
//!
//! with F_{t_i} = F^W_{t_i} ∨ F^B_{t_i,T}. The implicit Y-step is a
//! contraction whenever Δ_i·L < 1 and is solved by Picard iteration.
//!
//! Two engines realize the conditional expectations: [`pathwise`] fixes one
//! realized B path and integrates over ΔW_i by quadrature on value functions;
//! [`lsmc`] regresses simulated targets on (W_{t_i}, B_T − B_{t_i}).

pub mod lsmc;
pub mod pathwise;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condexp::{EstimatorError, GridSpec, Interpolation};
use crate::paths::{prefix_sums, suffix_sums, PathBundle, PathsError};
use crate::problem::{MeshPairing, Partition, ProblemError};
use crate::report::format_float;

pub use lsmc::solve_lsmc;
pub use pathwise::{
    backward_step_pathwise, evaluate_along_path, solve_backward_pathwise, PathEvaluation,
    PathwiseSolution, PathwiseSolver, StepOutput,
};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("Picard iteration did not converge within {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("invalid scheme config: {0}")]
    InvalidConfig(String),
    #[error("bundle needs at least {needed} paths for a basis of {basis} functions, got {got}")]
    TooFewPaths {
        needed: usize,
        basis: usize,
        got: usize,
    },
    #[error("bundle partition does not match the solver partition")]
    PartitionMismatch,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Paths(#[from] PathsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Pathwise,
    Lsmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub engine: Engine,
    pub picard_tolerance: f64,
    pub picard_max_iterations: usize,
    pub quadrature_nodes: usize,
    pub grid: GridSpec,
    pub interpolation: Interpolation,
    pub lsmc_degree: usize,
    /// ξ^π = ξ + terminal_perturbation.
    pub terminal_perturbation: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Pathwise,
            picard_tolerance: 1e-12,
            picard_max_iterations: 50,
            quadrature_nodes: 12,
            grid: GridSpec::default(),
            interpolation: Interpolation::Cubic,
            lsmc_degree: 3,
            terminal_perturbation: 0.0,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.picard_tolerance > 0.0) {
            return Err(SchemeError::InvalidConfig(
                "picard_tolerance must be positive".into(),
            ));
        }
        if self.picard_max_iterations == 0 {
            return Err(SchemeError::InvalidConfig(
                "picard_max_iterations must be at least 1".into(),
            ));
        }
        if !self.terminal_perturbation.is_finite() {
            return Err(SchemeError::InvalidConfig(
                "terminal_perturbation must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Picard result with the observed contraction behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOutcome {
    pub value: f64,
    pub iterations: usize,
    /// Largest ratio |y_{k+1} − y_k| / |y_k − y_{k−1}| seen while the
    /// denominator was well above rounding level; `None` if never observed.
    pub max_ratio: Option<f64>,
}

/// Successive differences below this (relative to max(1, |y|)) are too close
/// to rounding noise for their ratio to say anything about contraction.
const RATIO_FLOOR: f64 = 1e-6;

/// Solves y = eta + h·f(t, y, z) by y_{k+1} = eta + h·f(t, y_k, z), y₀ = eta.
///
/// Stops once |y_{k+1} − y_k| ≤ tolerance; since h·L < 1 this also bounds the
/// residual |y − (eta + h f(t, y, z))| by the tolerance.
pub fn picard_solve_implicit<F>(
    eta: f64,
    z: f64,
    t: f64,
    h: f64,
    f: F,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PicardOutcome, SchemeError>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut y = eta;
    let mut prev_change: Option<f64> = None;
    let mut max_ratio: Option<f64> = None;
    let mut change = f64::INFINITY;
    for k in 1..=max_iterations {
        let next = eta + h * f(t, y, z);
        change = (next - y).abs();
        if let Some(prev) = prev_change {
            if prev > RATIO_FLOOR * y.abs().max(1.0) {
                let r = change / prev;
                max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
            }
        }
        y = next;
        if change <= tolerance {
            return Ok(PicardOutcome {
                value: y,
                iterations: k,
                max_ratio,
            });
        }
        prev_change = Some(change);
    }
    Err(SchemeError::NoConvergence {
        iterations: max_iterations,
        last_change: change,
    })
}

/// Aggregate Picard iteration counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PicardStats {
    pub solves: u64,
    pub total_iterations: u64,
    pub max_iterations: usize,
    pub max_ratio: Option<f64>,
}

impl PicardStats {
    pub fn record(&mut self, outcome: &PicardOutcome) {
        self.solves += 1;
        self.total_iterations += outcome.iterations as u64;
        self.max_iterations = self.max_iterations.max(outcome.iterations);
        self.max_ratio = match (self.max_ratio, outcome.max_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn merge(&mut self, other: &PicardStats) {
        self.solves += other.solves;
        self.total_iterations += other.total_iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.max_ratio = match (self.max_ratio, other.max_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.solves as f64
        }
    }
}

/// Scheme output along sampled joint paths (both engines).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub engine: Engine,
    pub partition: Partition,
    pub path_count: usize,
    /// Y^π_{t_i} along path p at index p·(n+1) + i.
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub b_future: Vec<f64>,
    pub picard: PicardStats,
    pub extrapolated: usize,
}

impl DiscreteSolution {
    fn stride(&self) -> usize {
        self.partition.len() + 1
    }

    pub fn y_path(&self, path: usize) -> &[f64] {
        let s = self.stride();
        &self.y[path * s..(path + 1) * s]
    }

    pub fn z_path(&self, path: usize) -> &[f64] {
        let s = self.stride();
        &self.z[path * s..(path + 1) * s]
    }

    /// Columns: path, i, t_i, W, B_T_minus_B_t, Y_pi, Z_pi.
    pub fn write_csv<Wr: Write>(&self, mut out: Wr) -> io::Result<()> {
        writeln!(out, "path,i,t_i,W,B_T_minus_B_t,Y_pi,Z_pi")?;
        let s = self.stride();
        for p in 0..self.path_count {
            for (i, t) in self.partition.times().iter().enumerate() {
                let k = p * s + i;
                writeln!(
                    out,
                    "{p},{i},{},{},{},{},{}",
                    format_float(*t),
                    format_float(self.w[k]),
                    format_float(self.b_future[k]),
                    format_float(self.y[k]),
                    format_float(self.z[k]),
                )?;
            }
        }
        Ok(())
    }
}

/// Runs the configured engine over every joint path of the bundle.
pub fn solve_bundle(
    pairing: &MeshPairing,
    bundle: &PathBundle,
    config: &SchemeConfig,
) -> Result<DiscreteSolution, SchemeError> {
    if bundle.partition() != pairing.partition() {
        return Err(SchemeError::PartitionMismatch);
    }
    match config.engine {
        Engine::Pathwise => pathwise::solve_bundle_pathwise(pairing, bundle, config),
        Engine::Lsmc => solve_lsmc(pairing, bundle, config),
    }
}

pub(crate) fn joint_states(bundle: &PathBundle) -> (Vec<f64>, Vec<f64>) {
    let mut w = Vec::with_capacity(bundle.path_count() * (bundle.partition().len() + 1));
    let mut s = Vec::with_capacity(w.capacity());
    for p in 0..bundle.path_count() {
        w.extend(prefix_sums(bundle.w_increments(p)));
        s.extend(suffix_sums(bundle.b_increments(p)));
    }
    (w, s)
}

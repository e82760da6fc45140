//! B-pathwise engine: with the B-future known at step i, each conditional
//! expectation reduces to a one-dimensional Gaussian integral over ΔW_i,
//! evaluated by Gauss–Hermite quadrature on value functions w ↦ Y^π_{t_i}.

use rayon::prelude::*;

use super::{picard_solve_implicit, DiscreteSolution, PicardStats, SchemeConfig, SchemeError};
use crate::condexp::{
    gauss_hermite_rule, GridQuadrature, QuadratureRule, UniformGrid, ValueFunction,
};
use crate::paths::{prefix_sums, suffix_sums, PathBundle};
use crate::problem::{MeshPairing, ProblemSpec};

/// Value functions u_i (for Y^π) and v_i (for Z^π), i = 0…n, for one B path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseSolution {
    pub y: Vec<ValueFunction>,
    pub z: Vec<ValueFunction>,
    pub picard: PicardStats,
    pub extrapolated: usize,
    terminal_shift: f64,
    spec: ProblemSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub y: ValueFunction,
    pub z: ValueFunction,
    pub picard: PicardStats,
    pub extrapolated: usize,
}

/// One backward step on every grid node.
#[allow(clippy::too_many_arguments)]
pub fn backward_step_pathwise(
    u_next: &ValueFunction,
    delta_b: f64,
    t_i: f64,
    h: f64,
    spec: &ProblemSpec,
    rule: &QuadratureRule,
    config: &SchemeConfig,
) -> Result<StepOutput, SchemeError> {
    let grid = *u_next.grid();
    let mut ys = Vec::with_capacity(grid.len());
    let mut zs = Vec::with_capacity(grid.len());
    let mut picard = PicardStats::default();
    let quadrature = GridQuadrature::new(grid, u_next.order(), h, rule);
    let sums = quadrature.expect_all(u_next, |y| spec.evaluate_backward_coeff(y));
    let extrapolated = sums.extrapolated;
    for j in 0..grid.len() {
        // ΔB_i is F_{t_i}-measurable, so it leaves the expectations
        let z = (sums.u_weighted[j] + delta_b * sums.g_weighted[j]) / h;
        let eta = sums.u_plain[j] + delta_b * sums.g_plain[j];
        let out = picard_solve_implicit(
            eta,
            z,
            t_i,
            h,
            |t, y, z| spec.evaluate_generator(t, y, z),
            config.picard_tolerance,
            config.picard_max_iterations,
        )?;
        picard.record(&out);
        ys.push(out.value);
        zs.push(z);
    }
    let order = u_next.order();
    Ok(StepOutput {
        y: ValueFunction::new(grid, order, ys)?,
        z: ValueFunction::new(grid, order, zs)?,
        picard,
        extrapolated,
    })
}

/// Pre-built quadrature rule and grid for repeated per-path solves.
#[derive(Debug, Clone)]
pub struct PathwiseSolver {
    pairing: MeshPairing,
    config: SchemeConfig,
    rule: QuadratureRule,
    grid: UniformGrid,
}

impl PathwiseSolver {
    pub fn new(pairing: &MeshPairing, config: &SchemeConfig) -> Result<Self, SchemeError> {
        config.validate()?;
        let rule = gauss_hermite_rule(config.quadrature_nodes)?;
        let grid = config.grid.build(pairing.spec().horizon)?;
        Ok(Self {
            pairing: pairing.clone(),
            config: *config,
            rule,
            grid,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn pairing(&self) -> &MeshPairing {
        &self.pairing
    }

    pub fn solve(&self, b_increments: &[f64]) -> Result<PathwiseSolution, SchemeError> {
        let spec = self.pairing.spec();
        let partition = self.pairing.partition();
        let n = partition.len();
        if b_increments.len() != n {
            return Err(SchemeError::PartitionMismatch);
        }
        let order = self.config.interpolation;
        let shift = self.config.terminal_perturbation;
        let mut y = Vec::with_capacity(n + 1);
        let mut z = Vec::with_capacity(n + 1);
        y.push(ValueFunction::from_fn(self.grid, order, |w| {
            spec.evaluate_terminal(w) + shift
        }));
        z.push(ValueFunction::constant(self.grid, order, 0.0));
        let mut picard = PicardStats::default();
        let mut extrapolated = 0;
        for i in (0..n).rev() {
            let step = backward_step_pathwise(
                y.last().expect("seeded with the terminal value"),
                b_increments[i],
                partition.times()[i],
                partition.steps()[i],
                spec,
                &self.rule,
                &self.config,
            )?;
            picard.merge(&step.picard);
            extrapolated += step.extrapolated;
            y.push(step.y);
            z.push(step.z);
        }
        y.reverse();
        z.reverse();
        Ok(PathwiseSolution {
            y,
            z,
            picard,
            extrapolated,
            terminal_shift: shift,
            spec: spec.clone(),
        })
    }
}

pub fn solve_backward_pathwise(
    pairing: &MeshPairing,
    b_increments: &[f64],
    config: &SchemeConfig,
) -> Result<PathwiseSolution, SchemeError> {
    PathwiseSolver::new(pairing, config)?.solve(b_increments)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEvaluation {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub extrapolated: usize,
}

/// Y^π_{t_i} = u_i(W_{t_i}), Z^π_{t_i} = v_i(W_{t_i}); the terminal entry is
/// ξ^π evaluated exactly and Z^π_{t_n} = 0.
pub fn evaluate_along_path(solution: &PathwiseSolution, w_increments: &[f64]) -> PathEvaluation {
    let w = prefix_sums(w_increments);
    evaluate_at_states(solution, &w)
}

pub(crate) fn evaluate_at_states(solution: &PathwiseSolution, w: &[f64]) -> PathEvaluation {
    let n = solution.y.len() - 1;
    let mut ys = Vec::with_capacity(n + 1);
    let mut zs = Vec::with_capacity(n + 1);
    let mut extrapolated = 0;
    for ((u, v), &wi) in solution.y[..n].iter().zip(&solution.z[..n]).zip(w) {
        let (yv, out) = u.eval_counted(wi);
        extrapolated += out as usize;
        ys.push(yv);
        zs.push(v.eval(wi));
    }
    ys.push(solution.spec.evaluate_terminal(w[n]) + solution.terminal_shift);
    zs.push(0.0);
    PathEvaluation {
        y: ys,
        z: zs,
        extrapolated,
    }
}

pub(crate) fn solve_bundle_pathwise(
    pairing: &MeshPairing,
    bundle: &PathBundle,
    config: &SchemeConfig,
) -> Result<DiscreteSolution, SchemeError> {
    let solver = PathwiseSolver::new(pairing, config)?;
    let per_path: Vec<Result<(PathEvaluation, PicardStats, usize), SchemeError>> = (0..bundle
        .path_count())
        .into_par_iter()
        .map(|p| {
            let sol = solver.solve(bundle.b_increments(p))?;
            let eval = evaluate_along_path(&sol, bundle.w_increments(p));
            Ok((eval, sol.picard, sol.extrapolated))
        })
        .collect();
    let partition = pairing.partition().clone();
    let stride = partition.len() + 1;
    let m = bundle.path_count();
    let mut out = DiscreteSolution {
        engine: super::Engine::Pathwise,
        partition,
        path_count: m,
        y: Vec::with_capacity(m * stride),
        z: Vec::with_capacity(m * stride),
        w: Vec::with_capacity(m * stride),
        b_future: Vec::with_capacity(m * stride),
        picard: PicardStats::default(),
        extrapolated: 0,
    };
    for (p, result) in per_path.into_iter().enumerate() {
        let (eval, stats, extrap) = result?;
        out.y.extend(eval.y);
        out.z.extend(eval.z);
        out.w.extend(prefix_sums(bundle.w_increments(p)));
        out.b_future.extend(suffix_sums(bundle.b_increments(p)));
        out.picard.merge(&stats);
        out.extrapolated += extrap + eval.extrapolated;
    }
    Ok(out)
}

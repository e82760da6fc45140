//! Regression engine: conditional expectations estimated by least squares
//! on the state (W_{t_i}, B_T − B_{t_i}) across the whole bundle.
//!
//! The true conditioning set also contains the individual future B
//! increments; truncating it to two coordinates is a known source of
//! regression bias.

use rayon::prelude::*;

use super::{
    joint_states, picard_solve_implicit, DiscreteSolution, Engine, PicardStats, SchemeConfig,
    SchemeError,
};
use crate::condexp::{Design, PolynomialBasis};
use crate::paths::PathBundle;
use crate::problem::MeshPairing;

pub fn solve_lsmc(
    pairing: &MeshPairing,
    bundle: &PathBundle,
    config: &SchemeConfig,
) -> Result<DiscreteSolution, SchemeError> {
    config.validate()?;
    if bundle.partition() != pairing.partition() {
        return Err(SchemeError::PartitionMismatch);
    }
    let spec = pairing.spec();
    let partition = pairing.partition();
    let n = partition.len();
    let m = bundle.path_count();
    let basis_size = PolynomialBasis::full(config.lsmc_degree).size();
    if m < 10 * basis_size {
        return Err(SchemeError::TooFewPaths {
            needed: 10 * basis_size,
            basis: basis_size,
            got: m,
        });
    }
    let stride = n + 1;
    let (w, b_future) = joint_states(bundle);
    let mut y = vec![0.0; m * stride];
    let mut z = vec![0.0; m * stride];
    for p in 0..m {
        y[p * stride + n] =
            spec.evaluate_terminal(w[p * stride + n]) + config.terminal_perturbation;
    }

    let mut picard = PicardStats::default();
    for i in (0..n).rev() {
        let h = partition.steps()[i];
        let t = partition.times()[i];
        let (y_targets, z_targets): (Vec<f64>, Vec<f64>) = (0..m)
            .into_par_iter()
            .map(|p| {
                let next = y[p * stride + i + 1];
                let target = next + spec.evaluate_backward_coeff(next) * bundle.b_increments(p)[i];
                (target, target * bundle.w_increments(p)[i] / h)
            })
            .unzip();
        let states: Vec<[f64; 2]> = (0..m)
            .map(|p| [w[p * stride + i], b_future[p * stride + i]])
            .collect();
        // W_{t_0} = 0 on every path, so the first step regresses on B only
        let basis = PolynomialBasis {
            degree: config.lsmc_degree,
            use_w: t > 0.0,
            use_s: true,
        };
        let design = Design::new(&states, basis)?;
        let y_fit = design.fit(&y_targets)?;
        let z_fit = design.fit(&z_targets)?;
        let solved: Vec<Result<(f64, f64, super::PicardOutcome), SchemeError>> = states
            .par_iter()
            .map(|s| {
                let eta = y_fit.predict(*s);
                let zv = z_fit.predict(*s);
                let out = picard_solve_implicit(
                    eta,
                    zv,
                    t,
                    h,
                    |t, y, z| spec.evaluate_generator(t, y, z),
                    config.picard_tolerance,
                    config.picard_max_iterations,
                )?;
                Ok((out.value, zv, out))
            })
            .collect();
        for (p, r) in solved.into_iter().enumerate() {
            let (yv, zv, out) = r?;
            picard.record(&out);
            y[p * stride + i] = yv;
            z[p * stride + i] = zv;
        }
    }

    Ok(DiscreteSolution {
        engine: Engine::Lsmc,
        partition: partition.clone(),
        path_count: m,
        y,
        z,
        w,
        b_future,
        picard,
        extrapolated: 0,
    })
}

//! Ground truth for linear problems
//!
//! ```text
//! Y_t = ξ + ∫_t^T (α Y_s + β Z_s + f_s) ds + ∫_t^T γ Y_s d←B_s − ∫_t^T Z_s dW_s
//! ```
//!
//! with constant α, β, γ. With
//! ρ_t = exp(β W_t + γ B_t + (α − β²/2 − γ²/2) t) the solution satisfies
//! Y_t = ρ_t⁻¹ E[ξ ρ_T + ∫_t^T ρ_s f_s ds | G_t], G_t = F^W_t ∨ F^B_{0,T}.
//! [`representation_mc`] estimates that expectation by simulation with the B
//! path held fixed; [`closed_form`] evaluates it analytically for the
//! exponential, identity and constant terminal families. A closed form is
//! only trusted once [`certify`] has checked it against the simulation.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::paths::RngSpec;
use crate::problem::{BackwardCoeff, Forcing, Generator, ProblemSpec, Terminal};
use crate::report::format_float;
use crate::stats::RunningMoments;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("problem is not a linear BDSDE: {0}")]
    NotLinear(String),
    #[error("coefficients violate the boundedness condition: |α|+|β|+|γ| = {sum} > {bound}")]
    Unbounded { sum: f64, bound: f64 },
    #[error("no closed form registered for {0}")]
    UnsupportedFamily(String),
    #[error("representation Monte Carlo needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error(
        "closed form failed certification ({failed} of {probes} probes outside 3 standard errors)"
    )]
    CertificationFailed { failed: usize, probes: usize },
}

/// Constant-coefficient linear problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearProblem {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Additive constant c₀ in g(y) = γ·y + c₀. Only admitted when
    /// α = β = γ = 0, where the solution is E[ξ + ∫f | G_t] + c₀(B_T − B_t).
    pub backward_constant: f64,
    pub forcing: Forcing,
    pub terminal: Terminal,
    pub horizon: f64,
    pub bound: f64,
}

impl LinearProblem {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        forcing: Forcing,
        terminal: Terminal,
        horizon: f64,
        bound: f64,
    ) -> Result<Self, OracleError> {
        let sum = alpha.abs() + beta.abs() + gamma.abs();
        if sum > bound {
            return Err(OracleError::Unbounded { sum, bound });
        }
        if !(horizon > 0.0) {
            return Err(OracleError::NotLinear(format!(
                "horizon {horizon} must be positive"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            backward_constant: 0.0,
            forcing,
            terminal,
            horizon,
            bound,
        })
    }

    /// Zero coefficients with a constant backward coefficient g ≡ c₀.
    pub fn constant_noise(c0: f64, forcing: Forcing, terminal: Terminal, horizon: f64) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            backward_constant: c0,
            forcing,
            terminal,
            horizon,
            bound: 0.0,
        }
    }

    /// Reads the coefficients off a registry spec; the declared Lipschitz
    /// constant serves as the bound.
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self, OracleError> {
        let (alpha, beta, forcing) = match spec.generator {
            Generator::Zero => (0.0, 0.0, Forcing::Zero),
            Generator::Linear {
                alpha,
                beta,
                forcing,
            } => (alpha, beta, forcing),
            Generator::SinLinear { epsilon, .. } if epsilon != 0.0 => {
                return Err(OracleError::NotLinear("sin-perturbed generator".into()))
            }
            Generator::SinLinear {
                alpha,
                beta,
                forcing,
                ..
            } => (alpha, beta, forcing),
        };
        match spec.backward_coeff {
            BackwardCoeff::Zero => {
                let bound = spec.lipschitz_l.max(alpha.abs() + beta.abs());
                Self::new(
                    alpha,
                    beta,
                    0.0,
                    forcing,
                    spec.terminal,
                    spec.horizon,
                    bound,
                )
            }
            BackwardCoeff::Linear { gamma } => {
                let bound = spec.lipschitz_l.max(alpha.abs() + beta.abs() + gamma.abs());
                Self::new(
                    alpha,
                    beta,
                    gamma,
                    forcing,
                    spec.terminal,
                    spec.horizon,
                    bound,
                )
            }
            BackwardCoeff::Constant { c } => {
                if alpha != 0.0 || beta != 0.0 {
                    return Err(OracleError::NotLinear(
                        "constant backward coefficient with nonzero α or β".into(),
                    ));
                }
                Ok(Self::constant_noise(
                    c,
                    forcing,
                    spec.terminal,
                    spec.horizon,
                ))
            }
            BackwardCoeff::Sin { amplitude } if amplitude != 0.0 => {
                Err(OracleError::NotLinear("sin backward coefficient".into()))
            }
            BackwardCoeff::Sin { .. } => Self::new(
                alpha,
                beta,
                0.0,
                forcing,
                spec.terminal,
                spec.horizon,
                spec.lipschitz_l.max(alpha.abs() + beta.abs()),
            ),
        }
    }

    /// K₀ = α − β²/2 − γ²/2.
    pub fn k0(&self) -> f64 {
        self.alpha - 0.5 * self.beta * self.beta - 0.5 * self.gamma * self.gamma
    }

    fn check_time(&self, t: f64) -> Result<(), OracleError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(OracleError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

/// ρ_t for constant coefficients given W_t = w and B_t = b.
pub fn rho_at(p: &LinearProblem, t: f64, w: f64, b: f64) -> f64 {
    (p.beta * w + p.gamma * b + p.k0() * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Exponential { c: f64 },
    Identity,
    Constant { xi0: f64 },
}

/// Exact (Y_t, Z_t) as functions of (t, W_t, B_T − B_t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormSolution {
    problem: LinearProblem,
    family: Family,
    rate_bias: f64,
}

pub fn closed_form(p: &LinearProblem) -> Result<ClosedFormSolution, OracleError> {
    let family = match p.terminal {
        Terminal::Exp { c } => Family::Exponential { c },
        Terminal::Identity => Family::Identity,
        Terminal::Constant { c } => Family::Constant { xi0: c },
        Terminal::Call { .. } => {
            return Err(OracleError::UnsupportedFamily("call terminal".into()))
        }
    };
    let zero_coefficients = p.alpha == 0.0 && p.beta == 0.0 && p.gamma == 0.0;
    if !p.forcing.is_zero() && !zero_coefficients {
        return Err(OracleError::UnsupportedFamily(
            "forcing combined with nonzero coefficients".into(),
        ));
    }
    Ok(ClosedFormSolution {
        problem: *p,
        family,
        rate_bias: 0.0,
    })
}

impl ClosedFormSolution {
    pub fn problem(&self) -> &LinearProblem {
        &self.problem
    }

    pub fn k0(&self) -> f64 {
        self.problem.k0()
    }

    /// Deliberately wrong variant (adds `bias` to the exponential time rate);
    /// exists so certification failure paths can be exercised.
    pub fn with_rate_bias(mut self, bias: f64) -> Self {
        self.rate_bias = bias;
        self
    }

    /// exp(γ S + (α − γ²/2) τ): the B-dependent factor shared by every family.
    fn noise_factor(&self, tau: f64, s: f64) -> f64 {
        let p = &self.problem;
        (p.gamma * s + (p.alpha - 0.5 * p.gamma * p.gamma + self.rate_bias) * tau).exp()
    }

    fn additive(&self, t: f64, s: f64) -> f64 {
        let p = &self.problem;
        p.backward_constant * s + p.forcing.integral(t, p.horizon)
    }

    /// Y_t given W_t = w and B_T − B_t = s.
    pub fn y(&self, t: f64, w: f64, s: f64) -> f64 {
        let p = &self.problem;
        let tau = p.horizon - t;
        let e = self.noise_factor(tau, s);
        let core = match self.family {
            Family::Exponential { c } => e * (c * w + (c * p.beta + 0.5 * c * c) * tau).exp(),
            Family::Identity => e * (w + p.beta * tau),
            Family::Constant { xi0 } => e * xi0,
        };
        core + self.additive(t, s)
    }

    /// Z_t = ∂Y_t/∂w.
    pub fn z(&self, t: f64, w: f64, s: f64) -> f64 {
        let p = &self.problem;
        let tau = p.horizon - t;
        match self.family {
            Family::Exponential { c } => {
                c * self.noise_factor(tau, s) * (c * w + (c * p.beta + 0.5 * c * c) * tau).exp()
            }
            Family::Identity => self.noise_factor(tau, s),
            Family::Constant { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

const MC_BATCHES: usize = 50;

/// Estimates ρ_t⁻¹ E[ξ ρ_T + ∫_t^T ρ_s f_s ds | G_t] with the B path on
/// [t, T] held fixed. `b_path` holds the B increments on a uniform partition
/// of [t, T]; with nonzero forcing the time integral uses the trapezoid rule
/// on that partition (and W is simulated on it), so pass a fine one.
pub fn representation_mc(
    p: &LinearProblem,
    t: f64,
    w: f64,
    b_path: &[f64],
    samples: usize,
    rng: RngSpec,
) -> Result<McEstimate, OracleError> {
    p.check_time(t)?;
    if samples < 100 {
        return Err(OracleError::TooFewSamples(samples));
    }
    let tau = p.horizon - t;
    let s_total: f64 = b_path.iter().sum();
    let k0 = p.k0();
    let forced = !p.forcing.is_zero() && !b_path.is_empty();

    let sample = |index: usize| -> f64 {
        let mut r = rng.stream(index as u64);
        if !forced {
            let n: f64 = StandardNormal.sample(&mut r);
            let dw = tau.sqrt() * n;
            let weight = (p.beta * dw + p.gamma * s_total + k0 * tau).exp();
            return p.terminal.eval(w + dw) * weight;
        }
        let cells = b_path.len();
        let ds = tau / cells as f64;
        let sd = ds.sqrt();
        // ρ_s/ρ_t along the sub-grid, trapezoid for ∫ ρ_s f_s ds
        let (mut dw, mut db) = (0.0, 0.0);
        let mut prev = p.forcing.eval(t);
        let mut integral = 0.0;
        for (j, inc) in b_path.iter().enumerate() {
            let n: f64 = StandardNormal.sample(&mut r);
            dw += sd * n;
            db += inc;
            let s = t + (j + 1) as f64 * ds;
            let cur = (p.beta * dw + p.gamma * db + k0 * (s - t)).exp() * p.forcing.eval(s);
            integral += 0.5 * (prev + cur) * ds;
            prev = cur;
        }
        let weight = (p.beta * dw + p.gamma * db + k0 * tau).exp();
        p.terminal.eval(w + dw) * weight + integral
    };

    let batches = MC_BATCHES.min(samples);
    let batch_stats: Vec<RunningMoments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * samples / batches;
            let hi = (b + 1) * samples / batches;
            let mut m = RunningMoments::new();
            for k in lo..hi {
                m.push(sample(k));
            }
            m
        })
        .collect();

    let mut total = 0u64;
    let mut mean = 0.0;
    let mut batch_means = RunningMoments::new();
    for m in &batch_stats {
        // Chan et al. merge of the overall mean, exact when all means agree
        let n = total + m.count();
        let delta = m.mean() - mean;
        mean += delta * m.count() as f64 / n as f64;
        total = n;
        batch_means.push(m.mean());
    }
    let offset = p.backward_constant * s_total;
    Ok(McEstimate {
        estimate: mean + offset,
        standard_error: batch_means.standard_error(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub id: usize,
    pub t: f64,
    pub w: f64,
    pub b_future: f64,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub probes: Vec<ProbeResult>,
}

impl Certification {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.pass)
    }

    pub fn failures(&self) -> usize {
        self.probes.iter().filter(|p| !p.pass).count()
    }

    /// Columns: probe, t, w, B_T_minus_B_t, closed_form, mc_estimate, se, pass.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "probe,t,w,B_T_minus_B_t,closed_form,mc_estimate,se,pass"
        )?;
        for p in &self.probes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.id,
                format_float(p.t),
                format_float(p.w),
                format_float(p.b_future),
                format_float(p.closed_form),
                format_float(p.mc_estimate),
                format_float(p.standard_error),
                if p.pass { "pass" } else { "fail" }
            )?;
        }
        Ok(())
    }
}

/// Sub-steps of the fixed B path handed to the representation estimator.
pub const CERTIFICATION_B_CELLS: usize = 256;

/// Compares the closed form against [`representation_mc`] at `probes`
/// independent (t, W_t, B-path) draws; a probe passes when the two agree
/// within 3 standard errors.
pub fn certify(
    cf: &ClosedFormSolution,
    samples: usize,
    probes: usize,
    rng: RngSpec,
) -> Result<Certification, OracleError> {
    let p = cf.problem();
    let mut out = Vec::with_capacity(probes);
    for id in 0..probes {
        let mut r = rng.derive(id as u64).stream(0);
        let u: f64 = rand::Rng::random(&mut r);
        let t = 0.9 * p.horizon * u;
        let n: f64 = StandardNormal.sample(&mut r);
        let w = t.sqrt() * n;
        let sd = ((p.horizon - t) / CERTIFICATION_B_CELLS as f64).sqrt();
        let b_path: Vec<f64> = (0..CERTIFICATION_B_CELLS)
            .map(|_| {
                let n: f64 = StandardNormal.sample(&mut r);
                sd * n
            })
            .collect();
        let s: f64 = b_path.iter().sum();
        let exact = cf.y(t, w, s);
        let mc = representation_mc(p, t, w, &b_path, samples, rng.derive(1_000_000 + id as u64))?;
        let diff = (exact - mc.estimate).abs();
        let pass = if mc.standard_error > 0.0 {
            diff <= 3.0 * mc.standard_error
        } else {
            diff <= 1e-12 * exact.abs().max(1.0)
        };
        out.push(ProbeResult {
            id,
            t,
            w,
            b_future: s,
            closed_form: exact,
            mc_estimate: mc.estimate,
            standard_error: mc.standard_error,
            pass,
        });
    }
    Ok(Certification { probes: out })
}

/// A closed form that passed [`certify`].
#[derive(Debug, Clone)]
pub struct CertifiedOracle {
    solution: ClosedFormSolution,
    certification: Certification,
}

impl CertifiedOracle {
    pub fn certify(
        solution: ClosedFormSolution,
        samples: usize,
        probes: usize,
        rng: RngSpec,
    ) -> Result<Self, OracleError> {
        let certification = certify(&solution, samples, probes, rng)?;
        if !certification.passed() {
            return Err(OracleError::CertificationFailed {
                failed: certification.failures(),
                probes,
            });
        }
        Ok(Self {
            solution,
            certification,
        })
    }

    pub fn solution(&self) -> &ClosedFormSolution {
        &self.solution
    }

    pub fn certification(&self) -> &Certification {
        &self.certification
    }
}

/// E|X_t − X_s|^p / |t − s|^{p/2} for one pair of times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderRatio {
    pub s: f64,
    pub t: f64,
    pub y_ratio: f64,
    pub y_se: f64,
    pub z_ratio: f64,
    pub z_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderEstimate {
    pub pairs: Vec<HolderRatio>,
}

impl HolderEstimate {
    /// Largest Y ratio over the pairs with its standard error.
    pub fn max_y(&self) -> (f64, f64) {
        self.pairs
            .iter()
            .map(|r| (r.y_ratio, r.y_se))
            .fold(
                (f64::NEG_INFINITY, 0.0),
                |a, b| if b.0 > a.0 { b } else { a },
            )
    }

    pub fn max_z(&self) -> (f64, f64) {
        self.pairs
            .iter()
            .map(|r| (r.z_ratio, r.z_se))
            .fold(
                (f64::NEG_INFINITY, 0.0),
                |a, b| if b.0 > a.0 { b } else { a },
            )
    }
}

/// Draws `samples` standard normals and recenters/rescales them so the sample
/// mean is 0 and the (1/M-normalized) sample variance is exactly `variance`.
fn matched_normals(rng: &mut impl rand::Rng, samples: usize, variance: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..samples).map(|_| StandardNormal.sample(rng)).collect();
    if variance == 0.0 {
        return vec![0.0; samples];
    }
    let mean = x.iter().sum::<f64>() / samples as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / samples as f64;
    let scale = (variance / var).sqrt();
    for v in &mut x {
        *v = (*v - mean) * scale;
    }
    x
}

/// Monte Carlo estimate of the Hölder ratios of the closed-form (Y, Z) over
/// `pairs` (s < t). The Gaussian inputs W_s, W_t − W_s, B_t − B_s and
/// B_T − B_t are moment-matched, so quadratic functionals of them (the
/// identity and constant-noise families at p = 2) come out exact.
pub fn holder_ratio_closed_form(
    cf: &ClosedFormSolution,
    pairs: &[(f64, f64)],
    samples: usize,
    moment: f64,
    rng: RngSpec,
) -> Result<HolderEstimate, OracleError> {
    let horizon = cf.problem().horizon;
    let mut out = Vec::with_capacity(pairs.len());
    for (k, &(s, t)) in pairs.iter().enumerate() {
        cf.problem().check_time(s)?;
        cf.problem().check_time(t)?;
        let (s, t) = if s <= t { (s, t) } else { (t, s) };
        let gap = t - s;
        let mut r = rng.derive(k as u64).stream(0);
        let w_s = matched_normals(&mut r, samples, s);
        let dw = matched_normals(&mut r, samples, gap);
        let db = matched_normals(&mut r, samples, gap);
        let s_t = matched_normals(&mut r, samples, horizon - t);
        let norm = gap.powf(moment / 2.0);
        let mut ym = RunningMoments::new();
        let mut zm = RunningMoments::new();
        for j in 0..samples {
            let future_t = s_t[j];
            let future_s = future_t + db[j];
            let (ws, wt) = (w_s[j], w_s[j] + dw[j]);
            let dy = cf.y(t, wt, future_t) - cf.y(s, ws, future_s);
            let dz = cf.z(t, wt, future_t) - cf.z(s, ws, future_s);
            ym.push(dy.abs().powf(moment) / norm);
            zm.push(dz.abs().powf(moment) / norm);
        }
        out.push(HolderRatio {
            s,
            t,
            y_ratio: ym.mean(),
            y_se: ym.standard_error(),
            z_ratio: zm.mean(),
            z_se: zm.standard_error(),
        });
    }
    Ok(HolderEstimate { pairs: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn headline() -> LinearProblem {
        LinearProblem::new(
            0.3,
            0.2,
            0.4,
            Forcing::Zero,
            Terminal::Exp { c: 0.5 },
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn rho_examples() {
        let zero =
            LinearProblem::new(0.0, 0.0, 0.0, Forcing::Zero, Terminal::Identity, 1.0, 0.0).unwrap();
        assert_eq!(rho_at(&zero, 0.7, 1.3, -0.2), 1.0);
        let p = headline();
        assert_eq!(rho_at(&p, 0.0, 0.0, 0.0), 1.0);
        assert_relative_eq!(
            rho_at(&p, 1.0, 0.5, -1.0),
            (-0.1f64).exp(),
            max_relative = 1e-14
        );
    }

    /// The exponent of ρ_T/ρ_t is a sum over increments; simulating those
    /// sums on a fine grid and comparing with the closed exponent checks the
    /// bookkeeping of the K₀ term.
    #[test]
    fn rho_matches_discrete_sums() {
        let p = headline();
        let mut r = RngSpec::new(4).stream(0);
        let n = 1000;
        let dt = 1.0 / n as f64;
        let (mut w, mut b, mut drift) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x: f64 = StandardNormal.sample(&mut r);
            let y: f64 = StandardNormal.sample(&mut r);
            w += dt.sqrt() * x;
            b += dt.sqrt() * y;
            drift += p.k0() * dt;
        }
        let discrete = (p.beta * w + p.gamma * b + drift).exp();
        assert_relative_eq!(rho_at(&p, 1.0, w, b), discrete, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        let brownian =
            LinearProblem::new(0.0, 0.0, 0.0, Forcing::Zero, Terminal::Identity, 1.0, 0.0).unwrap();
        let cf = closed_form(&brownian).unwrap();
        assert_eq!(cf.y(0.3, 0.7, -0.1), 0.7);
        assert_eq!(cf.z(0.3, 0.7, -0.1), 1.0);

        let mgf = LinearProblem::new(
            0.0,
            0.0,
            0.0,
            Forcing::Zero,
            Terminal::Exp { c: 1.0 },
            1.0,
            0.0,
        )
        .unwrap();
        assert_relative_eq!(
            closed_form(&mgf).unwrap().y(0.0, 0.0, 0.3),
            0.5f64.exp(),
            max_relative = 1e-15
        );

        let cf = closed_form(&headline()).unwrap();
        assert_relative_eq!(cf.k0(), 0.2, max_relative = 1e-14);
        assert_relative_eq!(cf.y(0.0, 0.0, 0.7), 0.725f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn unsupported_families() {
        let call = LinearProblem::new(
            0.1,
            0.0,
            0.0,
            Forcing::Zero,
            Terminal::Call { k: 0.0 },
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            closed_form(&call),
            Err(OracleError::UnsupportedFamily(_))
        ));
        let forced = LinearProblem::new(
            0.1,
            0.0,
            0.0,
            Forcing::Constant { value: 1.0 },
            Terminal::Identity,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            closed_form(&forced),
            Err(OracleError::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn bounded_coefficients_required() {
        assert!(matches!(
            LinearProblem::new(0.5, 0.5, 0.5, Forcing::Zero, Terminal::Identity, 1.0, 1.0),
            Err(OracleError::Unbounded { .. })
        ));
    }

    #[test]
    fn terminal_consistency() {
        for terminal in [
            Terminal::Exp { c: 0.5 },
            Terminal::Identity,
            Terminal::Constant { c: 2.0 },
        ] {
            let p = LinearProblem::new(0.3, 0.2, 0.4, Forcing::Zero, terminal, 1.0, 1.0).unwrap();
            let cf = closed_form(&p).unwrap();
            for w in [-2.0, 0.0, 0.37, 1.5] {
                assert_eq!(cf.y(1.0, w, 0.0), terminal.eval(w));
            }
        }
    }

    #[test]
    fn z_is_the_w_derivative() {
        let h = 1e-5;
        for terminal in [
            Terminal::Exp { c: 0.5 },
            Terminal::Identity,
            Terminal::Constant { c: 2.0 },
        ] {
            let p = LinearProblem::new(0.3, 0.2, 0.4, Forcing::Zero, terminal, 1.0, 1.0).unwrap();
            let cf = closed_form(&p).unwrap();
            for (t, w, s) in [(0.0, 0.0, 0.7), (0.4, -0.8, 0.2), (0.9, 1.1, -0.3)] {
                let fd = (cf.y(t, w + h, s) - cf.y(t, w - h, s)) / (2.0 * h);
                let z = cf.z(t, w, s);
                if z == 0.0 {
                    assert!(fd.abs() < 1e-9);
                } else {
                    assert_relative_eq!(fd, z, max_relative = 1e-4);
                }
            }
        }
    }

    #[test]
    fn mc_zero_coefficient_constant_is_exact() {
        let p = LinearProblem::new(
            0.0,
            0.0,
            0.0,
            Forcing::Zero,
            Terminal::Constant { c: 0.7 },
            1.0,
            0.0,
        )
        .unwrap();
        let est = representation_mc(&p, 0.2, 0.4, &[0.1; 16], 1000, RngSpec::new(1)).unwrap();
        assert_eq!(est.estimate, 0.7);
        assert_eq!(est.standard_error, 0.0);
        assert!(matches!(
            representation_mc(&p, 0.2, 0.4, &[0.1; 16], 99, RngSpec::new(1)),
            Err(OracleError::TooFewSamples(99))
        ));
    }

    #[test]
    fn mc_martingale_case() {
        let p =
            LinearProblem::new(0.0, 0.0, 0.0, Forcing::Zero, Terminal::Identity, 1.0, 0.0).unwrap();
        let est = representation_mc(&p, 0.3, -0.25, &[0.05; 8], 20_000, RngSpec::new(2)).unwrap();
        assert!(
            (est.estimate + 0.25).abs() <= 3.0 * est.standard_error,
            "{est:?}"
        );
        assert!(est.standard_error > 0.0);
    }

    #[test]
    fn mc_forcing_matches_integral() {
        // zero coefficients: Y_t = E[W_T | W_t] + ∫_t^T (1 + 2s) ds
        let p = LinearProblem::new(
            0.0,
            0.0,
            0.0,
            Forcing::Affine { a: 1.0, b: 2.0 },
            Terminal::Identity,
            1.0,
            0.0,
        )
        .unwrap();
        let cf = closed_form(&p).unwrap();
        let b_path = vec![0.0; 256];
        let est = representation_mc(&p, 0.25, 0.1, &b_path, 20_000, RngSpec::new(3)).unwrap();
        let exact = cf.y(0.25, 0.1, 0.0);
        assert_relative_eq!(exact, 0.1 + 0.75 + (1.0 - 0.0625), max_relative = 1e-14);
        assert!(
            (est.estimate - exact).abs() <= 3.0 * est.standard_error + 1e-12,
            "{est:?} vs {exact}"
        );
    }

    #[test]
    fn mc_estimate_thread_independent() {
        let p = headline();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    representation_mc(&p, 0.1, 0.2, &[0.01; 32], 5000, RngSpec::new(8)).unwrap()
                })
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn constant_noise_from_spec() {
        let spec = ProblemSpec::with_registry_constants(
            Terminal::Constant { c: 1.0 },
            Generator::Zero,
            BackwardCoeff::Constant { c: 0.7 },
            1.0,
        )
        .unwrap();
        let p = LinearProblem::from_spec(&spec).unwrap();
        let cf = closed_form(&p).unwrap();
        assert_abs_diff_eq!(cf.y(0.2, 5.0, -0.4), 1.0 - 0.28, epsilon = 1e-15);
        assert_eq!(cf.z(0.2, 5.0, -0.4), 0.0);

        let sin = ProblemSpec::with_registry_constants(
            Terminal::Identity,
            Generator::Zero,
            BackwardCoeff::Sin { amplitude: 0.3 },
            1.0,
        )
        .unwrap();
        assert!(matches!(
            LinearProblem::from_spec(&sin),
            Err(OracleError::NotLinear(_))
        ));
    }

    #[test]
    fn holder_exact_families() {
        let brownian =
            LinearProblem::new(0.0, 0.0, 0.0, Forcing::Zero, Terminal::Identity, 1.0, 0.0).unwrap();
        let cf = closed_form(&brownian).unwrap();
        let pairs = [(0.0, 0.5), (0.25, 0.375), (0.5, 0.515625)];
        let est = holder_ratio_closed_form(&cf, &pairs, 2000, 2.0, RngSpec::new(5)).unwrap();
        for r in &est.pairs {
            assert_abs_diff_eq!(r.y_ratio, 1.0, epsilon = 1e-12);
            assert_eq!(r.z_ratio, 0.0);
        }

        let noise =
            LinearProblem::constant_noise(0.7, Forcing::Zero, Terminal::Constant { c: 1.0 }, 1.0);
        let cf = closed_form(&noise).unwrap();
        let est = holder_ratio_closed_form(&cf, &pairs, 2000, 2.0, RngSpec::new(6)).unwrap();
        for r in &est.pairs {
            assert_abs_diff_eq!(r.y_ratio, 0.49, epsilon = 1e-12);
        }
    }
}

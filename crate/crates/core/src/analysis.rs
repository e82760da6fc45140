//! Convergence-rate and regularity studies.
//!
//! [`run_convergence_study`] measures, for a family of uniform partitions,
//!
//! ```text
//! Ê[ max_{0≤i≤n−1} |Y_{t_i} − Y^π_{t_i}|^p ]          (Y error)
//! Ê[ (Σ_{i<n} Δ_i |Z_{t_i} − Z^π_{t_i}|²)^{p/2} ]      (Z proxy)
//! ```
//!
//! against a certified closed form and fits the log-log slope of the p-th
//! roots against the mesh. The Z column is a grid-point proxy: the
//! continuous-time integrand of the one-step martingale representation is
//! never materialized by the scheme, so the proxy uses Z^π_{t_i} directly.
//! The per-path maximum is taken over grid points only and is therefore
//! biased low relative to the continuous-time maximum.
//!
//! [`run_holder_study`] estimates E|X_t − X_s|^p / |t − s|^{p/2} over dyadic
//! gaps, both for the closed form and for a fine-mesh scheme solution, and
//! flags series whose ratios keep growing as the gap shrinks.

use std::io::{self, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::oracle::{
    holder_ratio_closed_form, CertifiedOracle, ClosedFormSolution, LinearProblem, OracleError,
};
use crate::paths::{prefix_sums, sample_bundle, suffix_sums, PathBundle, PathsError, RngSpec};
use crate::problem::{build_uniform_partition, validate_mesh_condition, ProblemError, ProblemSpec};
use crate::report::format_float;
use crate::scheme::{
    evaluate_along_path, Engine, PathwiseSolver, PicardStats, SchemeConfig, SchemeError,
};
use crate::stats::{mean_and_standard_error, CompensatedSum};

/// Root errors at or below this level count as exact: the fit is skipped
/// rather than run on rounding noise.
pub const EXACT_ROOT_ERROR: f64 = 1e-12;

/// Label for the extra W streams used when more than one W path is
/// simulated per B path.
const EXTRA_W_LABEL: u64 = 0x5757_5757;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate log-log fit: {positive} positive-error points, at least 3 needed")]
    DegenerateFit { positive: usize },
    #[error("the certified oracle was built for a different problem")]
    OracleMismatch,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Paths(#[from] PathsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn default_sizes() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}
fn default_b_paths() -> usize {
    2000
}
fn default_one() -> usize {
    1
}
fn default_moment() -> u32 {
    2
}
fn default_true() -> bool {
    true
}
fn default_window() -> [f64; 2] {
    [0.4, 0.65]
}

/// Configuration of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Step counts of the uniform partitions, strictly increasing.
    #[serde(default = "default_sizes")]
    pub partition_sizes: Vec<usize>,
    /// Number of B paths (M_B).
    #[serde(default = "default_b_paths")]
    pub b_paths: usize,
    /// W paths simulated per B path (M_W).
    #[serde(default = "default_one")]
    pub w_paths_per_b: usize,
    /// Moment order p ∈ {2, 3, 4}.
    #[serde(default = "default_moment")]
    pub moment: u32,
    /// Common random numbers across refinements.
    #[serde(default = "default_true")]
    pub crn: bool,
    /// Acceptance window for the fitted Y slope.
    #[serde(default = "default_window")]
    pub slope_window: [f64; 2],
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            partition_sizes: default_sizes(),
            b_paths: default_b_paths(),
            w_paths_per_b: 1,
            moment: 2,
            crn: true,
            slope_window: default_window(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), AnalysisError> {
        let bad = |m: String| Err(AnalysisError::InvalidConfig(m));
        if self.partition_sizes.is_empty() {
            return bad("partition_sizes: at least one size is required".into());
        }
        if self.partition_sizes[0] == 0 {
            return bad("partition_sizes: sizes must be positive".into());
        }
        if self.partition_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("partition_sizes: sizes must be strictly increasing".into());
        }
        if self.b_paths == 0 {
            return bad("b_paths: must be positive".into());
        }
        if self.w_paths_per_b == 0 {
            return bad("w_paths_per_b: must be positive".into());
        }
        if !(2..=4).contains(&self.moment) {
            return bad(format!("moment: {} not in {{2, 3, 4}}", self.moment));
        }
        let [lo, hi] = self.slope_window;
        if !(lo <= hi) {
            return bad(format!("slope_window: [{lo}, {hi}] is empty"));
        }
        let finest = *self.partition_sizes.last().expect("non-empty");
        if self.crn {
            if let Some(n) = self
                .partition_sizes
                .iter()
                .find(|&&n| !finest.is_multiple_of(n))
            {
                return bad(format!(
                    "partition_sizes: {n} does not divide {finest}, required for common random numbers"
                ));
            }
        }
        for &n in &self.partition_sizes {
            validate_mesh_condition(&build_uniform_partition(n, spec.horizon)?, spec)?;
        }
        Ok(())
    }
}

/// Ordinary least squares fit of log(error) on log(mesh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoglogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval for the slope.
    pub half_width: f64,
    pub points: usize,
}

impl LoglogFit {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.slope).abs() <= self.half_width
    }
}

/// Fits log(error) = intercept + slope·log(mesh) over the points with a
/// positive, finite error. The confidence half-width uses the Student t
/// quantile with (points − 2) degrees of freedom.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LoglogFit, AnalysisError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(m, e)| *m > 0.0 && *e > 0.0 && e.is_finite() && m.is_finite())
        .map(|(m, e)| (m.ln(), e.ln()))
        .collect();
    let k = usable.len();
    if k < 3 {
        return Err(AnalysisError::DegenerateFit { positive: k });
    }
    let kf = k as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::DegenerateFit { positive: k });
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = usable
        .iter()
        .map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        })
        .sum();
    let dof = kf - 2.0;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(LoglogFit {
        slope,
        intercept,
        half_width: t * se,
        points: k,
    })
}

/// Outcome of a slope fit inside a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SlopeOutcome {
    Fitted(LoglogFit),
    /// Every error is at rounding level: the scheme is exact for this
    /// problem and no slope is defined.
    Exact,
    /// Too few positive errors to fit although the errors are not all at
    /// rounding level.
    Degenerate {
        positive: usize,
    },
}

impl SlopeOutcome {
    pub fn slope(&self) -> Option<f64> {
        match self {
            SlopeOutcome::Fitted(f) => Some(f.slope),
            _ => None,
        }
    }
}

/// One partition size of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub mesh: f64,
    /// Ê[max_i |Y_{t_i} − Y^π_{t_i}|^p]
    pub y_error_p: f64,
    pub y_se: f64,
    /// Ê[(Σ_i Δ_i |Z_{t_i} − Z^π_{t_i}|²)^{p/2}] (grid-point proxy)
    pub z_proxy_p: f64,
    pub z_se: f64,
    /// Quadrature and path evaluations that fell outside the value grid.
    pub extrapolation_count: usize,
}

impl ErrorRow {
    pub fn y_root(&self, moment: u32) -> f64 {
        self.y_error_p.powf(1.0 / moment as f64)
    }

    pub fn z_root(&self, moment: u32) -> f64 {
        self.z_proxy_p.powf(1.0 / moment as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub moment: u32,
    pub crn: bool,
    pub y_slope: SlopeOutcome,
    pub z_slope: SlopeOutcome,
    pub slope_window: [f64; 2],
    #[serde(skip)]
    pub picard: PicardStats,
}

/// Informational lower threshold for the Z-proxy slope.
pub const Z_SLOPE_THRESHOLD: f64 = 0.3;

impl ErrorReport {
    /// `Some(true)` when the fitted Y slope lies in the window, `None` for
    /// exact problems.
    pub fn y_slope_in_window(&self) -> Option<bool> {
        match self.y_slope {
            SlopeOutcome::Exact => None,
            SlopeOutcome::Fitted(f) => {
                Some(f.slope >= self.slope_window[0] && f.slope <= self.slope_window[1])
            }
            SlopeOutcome::Degenerate { .. } => Some(false),
        }
    }

    pub fn total_extrapolations(&self) -> usize {
        self.rows.iter().map(|r| r.extrapolation_count).sum()
    }

    /// Per-n table, then a blank line and the slope summary table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "n,mesh,y_error_p,y_se,z_proxy_p,z_se,extrapolation_count"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                format_float(r.mesh),
                format_float(r.y_error_p),
                format_float(r.y_se),
                format_float(r.z_proxy_p),
                format_float(r.z_se),
                r.extrapolation_count
            )?;
        }
        writeln!(out)?;
        writeln!(
            out,
            "quantity,slope,intercept,ci_half_width,window_lo,window_hi,status"
        )?;
        let z_window = [Z_SLOPE_THRESHOLD, f64::INFINITY];
        for (name, outcome, window) in [
            ("y", self.y_slope, self.slope_window),
            ("z_proxy", self.z_slope, z_window),
        ] {
            let (slope, intercept, hw, status) = match outcome {
                SlopeOutcome::Fitted(f) => {
                    let ok = f.slope >= window[0] && f.slope <= window[1];
                    (
                        format_float(f.slope),
                        format_float(f.intercept),
                        format_float(f.half_width),
                        if ok { "pass" } else { "fail" },
                    )
                }
                SlopeOutcome::Exact => (String::new(), String::new(), String::new(), "exact"),
                SlopeOutcome::Degenerate { .. } => {
                    (String::new(), String::new(), String::new(), "degenerate")
                }
            };
            writeln!(
                out,
                "{name},{slope},{intercept},{hw},{},{},{status}",
                format_float(window[0]),
                if window[1].is_finite() {
                    format_float(window[1])
                } else {
                    String::new()
                }
            )?;
        }
        Ok(())
    }
}

fn check_oracle(spec: &ProblemSpec, oracle: &CertifiedOracle) -> Result<(), AnalysisError> {
    let expected = LinearProblem::from_spec(spec)?;
    if *oracle.solution().problem() != expected {
        return Err(AnalysisError::OracleMismatch);
    }
    Ok(())
}

fn slope_outcome(rows: &[ErrorRow], root: impl Fn(&ErrorRow) -> f64) -> SlopeOutcome {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let e = root(r);
            (r.mesh, if e <= EXACT_ROOT_ERROR { 0.0 } else { e })
        })
        .collect();
    if points.iter().all(|p| p.1 == 0.0) {
        return SlopeOutcome::Exact;
    }
    match fit_loglog_slope(&points) {
        Ok(f) => SlopeOutcome::Fitted(f),
        Err(AnalysisError::DegenerateFit { positive }) => SlopeOutcome::Degenerate { positive },
        Err(_) => unreachable!("fit only fails as degenerate"),
    }
}

/// Increments of the `j`-th extra W path of B path `path` on the finest grid.
fn extra_w_path(rng: RngSpec, path: usize, j: usize, per_b: usize, steps: &[f64]) -> Vec<f64> {
    let mut r = rng.derive(EXTRA_W_LABEL).stream((path * per_b + j) as u64);
    steps
        .iter()
        .map(|h| {
            let z: f64 = StandardNormal.sample(&mut r);
            h.sqrt() * z
        })
        .collect()
}

fn aggregate(increments: &[f64], factor: usize) -> Vec<f64> {
    increments.chunks(factor).map(|c| c.iter().sum()).collect()
}

struct PathErrors {
    y: Vec<f64>,
    z: Vec<f64>,
    extrapolated: usize,
    picard: PicardStats,
}

/// Convergence study of the pathwise scheme against a certified closed form.
/// Requiring a [`CertifiedOracle`] makes an uncertified closed form
/// unusable here.
pub fn run_convergence_study(
    spec: &ProblemSpec,
    scheme: &SchemeConfig,
    cfg: &StudyConfig,
    oracle: &CertifiedOracle,
    seed: u64,
) -> Result<ErrorReport, AnalysisError> {
    cfg.validate(spec)?;
    scheme.validate()?;
    if scheme.engine != Engine::Pathwise {
        return Err(AnalysisError::InvalidConfig(
            "scheme.engine: convergence studies run the pathwise engine".into(),
        ));
    }
    check_oracle(spec, oracle)?;
    let cf = oracle.solution();
    let rng = RngSpec::new(seed);
    let finest = *cfg.partition_sizes.last().expect("validated non-empty");
    let finest_partition = build_uniform_partition(finest, spec.horizon)?;
    let crn_bundle = if cfg.crn {
        Some(sample_bundle(&finest_partition, cfg.b_paths, rng, false)?)
    } else {
        None
    };
    let p = cfg.moment as f64;
    let mut rows = Vec::with_capacity(cfg.partition_sizes.len());
    let mut picard = PicardStats::default();
    for &n in &cfg.partition_sizes {
        let partition = build_uniform_partition(n, spec.horizon)?;
        let pairing = validate_mesh_condition(&partition, spec)?;
        let (bundle, level_rng, fine_steps, factor): (PathBundle, RngSpec, Vec<f64>, usize) =
            match &crn_bundle {
                Some(b) => (
                    b.coarsen(finest / n)?,
                    rng,
                    finest_partition.steps().to_vec(),
                    finest / n,
                ),
                None => {
                    let level = rng.derive(n as u64);
                    (
                        sample_bundle(&partition, cfg.b_paths, level, false)?,
                        level,
                        partition.steps().to_vec(),
                        1,
                    )
                }
            };
        let solver = PathwiseSolver::new(&pairing, scheme)?;
        let times = partition.times();
        let steps = partition.steps();
        let per_path: Vec<Result<PathErrors, SchemeError>> = (0..cfg.b_paths)
            .into_par_iter()
            .map(|path| {
                let b_inc = bundle.b_increments(path);
                let sol = solver.solve(b_inc)?;
                let s = suffix_sums(b_inc);
                let mut out = PathErrors {
                    y: Vec::with_capacity(cfg.w_paths_per_b),
                    z: Vec::with_capacity(cfg.w_paths_per_b),
                    extrapolated: sol.extrapolated,
                    picard: sol.picard,
                };
                for j in 0..cfg.w_paths_per_b {
                    let extra;
                    let w_inc: &[f64] = if j == 0 {
                        bundle.w_increments(path)
                    } else {
                        let fine = extra_w_path(level_rng, path, j, cfg.w_paths_per_b, &fine_steps);
                        extra = aggregate(&fine, factor);
                        &extra
                    };
                    let eval = evaluate_along_path(&sol, w_inc);
                    let w = prefix_sums(w_inc);
                    let mut y_max: f64 = 0.0;
                    let mut z_sum = CompensatedSum::new();
                    for i in 0..n {
                        let dy = (cf.y(times[i], w[i], s[i]) - eval.y[i]).abs();
                        y_max = y_max.max(dy);
                        let dz = cf.z(times[i], w[i], s[i]) - eval.z[i];
                        z_sum.add(steps[i] * dz * dz);
                    }
                    out.y.push(y_max.powf(p));
                    out.z.push(z_sum.value().powf(p / 2.0));
                    out.extrapolated += eval.extrapolated;
                }
                Ok(out)
            })
            .collect();
        let mut y_samples = Vec::with_capacity(cfg.b_paths * cfg.w_paths_per_b);
        let mut z_samples = Vec::with_capacity(y_samples.capacity());
        let mut y_batches = Vec::with_capacity(cfg.b_paths);
        let mut z_batches = Vec::with_capacity(cfg.b_paths);
        let mut extrapolation_count = 0;
        for result in per_path {
            let errs = result?;
            picard.merge(&errs.picard);
            extrapolation_count += errs.extrapolated;
            y_batches.push(mean_and_standard_error(&errs.y).0);
            z_batches.push(mean_and_standard_error(&errs.z).0);
            y_samples.extend(errs.y);
            z_samples.extend(errs.z);
        }
        // W paths sharing a B path are correlated, so the standard error is
        // taken over per-B-path means whenever there are several B paths.
        let (y_error_p, y_se, z_proxy_p, z_se) = if cfg.b_paths >= 2 {
            let (ym, ys) = mean_and_standard_error(&y_batches);
            let (zm, zs) = mean_and_standard_error(&z_batches);
            (ym, ys, zm, zs)
        } else {
            let (ym, ys) = mean_and_standard_error(&y_samples);
            let (zm, zs) = mean_and_standard_error(&z_samples);
            (ym, ys, zm, zs)
        };
        rows.push(ErrorRow {
            n,
            mesh: partition.mesh(),
            y_error_p,
            y_se,
            z_proxy_p,
            z_se,
            extrapolation_count,
        });
    }
    let moment = cfg.moment;
    let y_slope = slope_outcome(&rows, |r| r.y_root(moment));
    let z_slope = slope_outcome(&rows, |r| r.z_root(moment));
    Ok(ErrorReport {
        rows,
        moment,
        crn: cfg.crn,
        y_slope,
        z_slope,
        slope_window: cfg.slope_window,
        picard,
    })
}

fn default_anchors() -> Vec<f64> {
    vec![0.0, 0.25]
}
fn default_levels() -> u32 {
    6
}
fn default_oracle_samples() -> usize {
    20_000
}
fn default_fine_steps() -> usize {
    64
}

/// Configuration of a Hölder-regularity study. Pairs are (s, s + T·2^{-k})
/// for every anchor s = a·T and k = 1…levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConfig {
    /// Anchor times as fractions of the horizon, each in [0, 1/2).
    #[serde(default = "default_anchors")]
    pub anchors: Vec<f64>,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default = "default_moment")]
    pub moment: u32,
    /// Joint samples per pair for the closed-form table.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    /// Paths for the scheme table.
    #[serde(default = "default_b_paths")]
    pub scheme_paths: usize,
    /// Steps of the fine uniform partition used for the scheme table.
    #[serde(default = "default_fine_steps")]
    pub scheme_steps: usize,
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self {
            anchors: default_anchors(),
            levels: default_levels(),
            moment: 2,
            oracle_samples: default_oracle_samples(),
            scheme_paths: default_b_paths(),
            scheme_steps: default_fine_steps(),
        }
    }
}

impl HolderConfig {
    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), AnalysisError> {
        let bad = |m: String| Err(AnalysisError::InvalidConfig(m));
        if self.anchors.is_empty() {
            return bad("anchors: at least one anchor is required".into());
        }
        if let Some(a) = self.anchors.iter().find(|a| !(0.0..0.5).contains(*a)) {
            return bad(format!("anchors: {a} outside [0, 1/2)"));
        }
        if self.levels == 0 || self.levels > 20 {
            return bad(format!("levels: {} outside 1..=20", self.levels));
        }
        if !(2..=4).contains(&self.moment) {
            return bad(format!("moment: {} not in {{2, 3, 4}}", self.moment));
        }
        if self.oracle_samples < 2 {
            return bad("oracle_samples: at least 2 required".into());
        }
        if self.scheme_paths < 2 {
            return bad("scheme_paths: at least 2 required".into());
        }
        let n = self.scheme_steps;
        if n == 0 || !n.is_multiple_of(1usize << self.levels) {
            return bad(format!(
                "scheme_steps: {n} must be a positive multiple of 2^levels = {}",
                1usize << self.levels
            ));
        }
        for a in &self.anchors {
            let idx = a * n as f64;
            if (idx - idx.round()).abs() > 1e-9 {
                return bad(format!("anchors: {a}·{n} is not a grid index"));
            }
        }
        validate_mesh_condition(&build_uniform_partition(n, spec.horizon)?, spec)?;
        Ok(())
    }

    /// (s, t, level) triples in anchor-major, level-minor order.
    pub fn pairs(&self, horizon: f64) -> Vec<(f64, f64, u32)> {
        let mut out = Vec::new();
        for &a in &self.anchors {
            let s = a * horizon;
            for k in 1..=self.levels {
                out.push((s, s + horizon * 0.5f64.powi(k as i32), k));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioSource {
    Oracle,
    Scheme,
}

impl RatioSource {
    pub fn name(&self) -> &'static str {
        match self {
            RatioSource::Oracle => "oracle",
            RatioSource::Scheme => "scheme",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderRow {
    pub source: RatioSource,
    pub s: f64,
    pub t: f64,
    pub level: u32,
    pub y_ratio: f64,
    pub y_se: f64,
    pub z_ratio: f64,
    pub z_se: f64,
    /// Growth flag of the (source, anchor) series this row belongs to.
    pub y_growth: bool,
    pub z_growth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub moment: u32,
    pub rows: Vec<HolderRow>,
}

impl HolderReport {
    pub fn any_growth(&self) -> bool {
        self.rows.iter().any(|r| r.y_growth || r.z_growth)
    }

    pub fn rows_for(&self, source: RatioSource) -> impl Iterator<Item = &HolderRow> {
        self.rows.iter().filter(move |r| r.source == source)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "source,s,t,gap,level,y_ratio,y_se,z_ratio,z_se,y_growth_flag,z_growth_flag"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.source.name(),
                format_float(r.s),
                format_float(r.t),
                format_float(r.t - r.s),
                r.level,
                format_float(r.y_ratio),
                format_float(r.y_se),
                format_float(r.z_ratio),
                format_float(r.z_se),
                r.y_growth,
                r.z_growth
            )?;
        }
        Ok(())
    }
}

/// Increases below this (relative to max(1, |ratio|)) are rounding noise:
/// an exactly vanishing Z has ratios of order 1e-30 with zero standard
/// error, which must not read as growth.
const GROWTH_ROUNDING_FLOOR: f64 = 1e-12;

/// True when the ratios, ordered by shrinking gap, increase across three
/// consecutive levels with each step exceeding three combined standard
/// errors.
pub fn growth_flag(series: &[(f64, f64)]) -> bool {
    let rises: Vec<bool> = series
        .windows(2)
        .map(|w| {
            let (a, sa) = w[0];
            let (b, sb) = w[1];
            let floor = GROWTH_ROUNDING_FLOOR * a.abs().max(b.abs()).max(1.0);
            b - a > (3.0 * (sa * sa + sb * sb).sqrt()).max(floor)
        })
        .collect();
    rises.windows(2).any(|r| r[0] && r[1])
}

/// Sets the growth flags series by series; rows must be grouped by
/// (source, s) and ordered by level within a group.
fn flag_series(rows: &mut [HolderRow]) {
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].source, rows[start].s);
        let mut end = start;
        while end < rows.len() && (rows[end].source, rows[end].s) == key {
            end += 1;
        }
        let group = &mut rows[start..end];
        let y: Vec<(f64, f64)> = group.iter().map(|r| (r.y_ratio, r.y_se)).collect();
        let z: Vec<(f64, f64)> = group.iter().map(|r| (r.z_ratio, r.z_se)).collect();
        let (fy, fz) = (growth_flag(&y), growth_flag(&z));
        for r in group.iter_mut() {
            r.y_growth = fy;
            r.z_growth = fz;
        }
        start = end;
    }
}

fn oracle_table(
    cf: &ClosedFormSolution,
    cfg: &HolderConfig,
    rng: RngSpec,
) -> Result<Vec<HolderRow>, AnalysisError> {
    let triples = cfg.pairs(cf.problem().horizon);
    let pairs: Vec<(f64, f64)> = triples.iter().map(|&(s, t, _)| (s, t)).collect();
    let est = holder_ratio_closed_form(cf, &pairs, cfg.oracle_samples, cfg.moment as f64, rng)?;
    Ok(est
        .pairs
        .iter()
        .zip(&triples)
        .map(|(r, &(_, _, level))| HolderRow {
            source: RatioSource::Oracle,
            s: r.s,
            t: r.t,
            level,
            y_ratio: r.y_ratio,
            y_se: r.y_se,
            z_ratio: r.z_ratio,
            z_se: r.z_se,
            y_growth: false,
            z_growth: false,
        })
        .collect())
}

fn scheme_table(
    spec: &ProblemSpec,
    scheme: &SchemeConfig,
    cfg: &HolderConfig,
    rng: RngSpec,
) -> Result<Vec<HolderRow>, AnalysisError> {
    let n = cfg.scheme_steps;
    let partition = build_uniform_partition(n, spec.horizon)?;
    let pairing = validate_mesh_condition(&partition, spec)?;
    let bundle = sample_bundle(&partition, cfg.scheme_paths, rng, false)?;
    let solver = PathwiseSolver::new(&pairing, scheme)?;
    type PathValues = (Vec<f64>, Vec<f64>);
    let evals: Vec<Result<PathValues, SchemeError>> = (0..cfg.scheme_paths)
        .into_par_iter()
        .map(|path| {
            let sol = solver.solve(bundle.b_increments(path))?;
            let e = evaluate_along_path(&sol, bundle.w_increments(path));
            Ok((e.y, e.z))
        })
        .collect();
    let evals: Vec<(Vec<f64>, Vec<f64>)> = evals.into_iter().collect::<Result<_, _>>()?;
    let p = cfg.moment as f64;
    let index = |time: f64| (time / spec.horizon * n as f64).round() as usize;
    let mut rows = Vec::new();
    for (s, t, level) in cfg.pairs(spec.horizon) {
        let (i, j) = (index(s), index(t));
        let norm = (t - s).powf(p / 2.0);
        let ys: Vec<f64> = evals
            .iter()
            .map(|(y, _)| (y[j] - y[i]).abs().powf(p) / norm)
            .collect();
        let zs: Vec<f64> = evals
            .iter()
            .map(|(_, z)| (z[j] - z[i]).abs().powf(p) / norm)
            .collect();
        let (y_ratio, y_se) = mean_and_standard_error(&ys);
        let (z_ratio, z_se) = mean_and_standard_error(&zs);
        rows.push(HolderRow {
            source: RatioSource::Scheme,
            s,
            t,
            level,
            y_ratio,
            y_se,
            z_ratio,
            z_se,
            y_growth: false,
            z_growth: false,
        });
    }
    Ok(rows)
}

/// Hölder ratios from the certified closed form and from a fine-mesh
/// pathwise scheme solution.
pub fn run_holder_study(
    spec: &ProblemSpec,
    scheme: &SchemeConfig,
    cfg: &HolderConfig,
    oracle: &CertifiedOracle,
    seed: u64,
) -> Result<HolderReport, AnalysisError> {
    cfg.validate(spec)?;
    scheme.validate()?;
    check_oracle(spec, oracle)?;
    let rng = RngSpec::new(seed);
    let mut rows = oracle_table(oracle.solution(), cfg, rng.derive(1))?;
    rows.extend(scheme_table(spec, scheme, cfg, rng.derive(2))?);
    flag_series(&mut rows);
    Ok(HolderReport {
        moment: cfg.moment,
        rows,
    })
}

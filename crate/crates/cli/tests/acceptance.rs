//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed. Wall-clock budgets are part of each
//! criterion and are checked against the time the criterion took here.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bdsde::analysis::{
    run_convergence_study, run_holder_study, HolderConfig, RatioSource, SlopeOutcome, StudyConfig,
    Z_SLOPE_THRESHOLD,
};
use bdsde::condexp::{gauss_hermite_rule, lsmc_fit, PolynomialBasis};
use bdsde::oracle::{certify, closed_form, CertifiedOracle, LinearProblem};
use bdsde::paths::{sample_bundle, suffix_sums, RngSpec};
use bdsde::scheme::{picard_solve_implicit, solve_bundle, Engine, PathwiseSolver, SchemeConfig};
use bdsde::stats::mean_and_standard_error;
use bdsde::{
    build_uniform_partition, validate_mesh_condition, BackwardCoeff, Forcing, Generator,
    ProblemError, ProblemSpec, Terminal,
};
use sha2::{Digest, Sha256};

type Check = Result<String, String>;

fn spec(terminal: Terminal, generator: Generator, g: BackwardCoeff, l: f64) -> ProblemSpec {
    ProblemSpec::new(terminal, generator, g, l, 0.0, 1.0).expect("valid problem")
}

fn zero_problem() -> ProblemSpec {
    spec(
        Terminal::Constant { c: 0.0 },
        Generator::Zero,
        BackwardCoeff::Zero,
        0.0,
    )
}

fn constant_noise(c: f64, c0: f64) -> ProblemSpec {
    spec(
        Terminal::Constant { c },
        Generator::Zero,
        BackwardCoeff::Constant { c: c0 },
        0.0,
    )
}

fn brownian() -> ProblemSpec {
    spec(
        Terminal::Identity,
        Generator::Zero,
        BackwardCoeff::Zero,
        0.0,
    )
}

fn linear_problem() -> ProblemSpec {
    spec(
        Terminal::Exp { c: 0.5 },
        Generator::Linear {
            alpha: 0.3,
            beta: 0.2,
            forcing: Forcing::Zero,
        },
        BackwardCoeff::Linear { gamma: 0.4 },
        1.0,
    )
}

fn certified(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<CertifiedOracle, String> {
    let lp = LinearProblem::from_spec(spec).map_err(|e| e.to_string())?;
    let cf = closed_form(&lp).map_err(|e| e.to_string())?;
    CertifiedOracle::certify(cf, samples, 5, RngSpec::new(seed)).map_err(|e| e.to_string())
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Largest |Y − y(t_i, w)| and |Z − z(t_i, w)| over every grid node and step.
fn grid_deviation(
    spec: &ProblemSpec,
    paths: usize,
    seed: u64,
    y: impl Fn(usize, f64, &[f64]) -> f64,
    z: impl Fn(usize, f64, &[f64]) -> f64,
) -> Result<f64, String> {
    let n = 16;
    let partition = build_uniform_partition(n, spec.horizon).map_err(err)?;
    let pairing = validate_mesh_condition(&partition, spec).map_err(err)?;
    let solver = PathwiseSolver::new(&pairing, &SchemeConfig::default()).map_err(err)?;
    let bundle = sample_bundle(&partition, paths, RngSpec::new(seed), false).map_err(err)?;
    let mut worst: f64 = 0.0;
    for p in 0..paths {
        let db = bundle.b_increments(p);
        let future = suffix_sums(db);
        let sol = solver.solve(db).map_err(err)?;
        for i in 0..=n {
            for (k, w) in solver.grid().points().enumerate() {
                worst = worst.max((sol.y[i].values()[k] - y(i, w, &future)).abs());
                worst = worst.max((sol.z[i].values()[k] - z(i, w, &future)).abs());
            }
        }
    }
    Ok(worst)
}

fn a1_exactness() -> Check {
    const TOL: f64 = 1e-10;
    let zero = grid_deviation(&zero_problem(), 4, 1, |_, _, _| 0.0, |_, _, _| 0.0)?;
    let (c, c0) = (1.5, 0.5);
    let noise = grid_deviation(
        &constant_noise(c, c0),
        4,
        2,
        |i, _, future| c + c0 * future[i],
        |_, _, _| 0.0,
    )?;
    let bm = grid_deviation(
        &brownian(),
        4,
        3,
        |_, w, _| w,
        |i, _, future| if i + 1 == future.len() { 0.0 } else { 1.0 },
    )?;
    let detail = format!(
        "max deviation zero {zero:.1e}, constant-g {noise:.1e}, W_T {bm:.1e} (tol {TOL:.0e})"
    );
    if zero <= TOL && noise <= TOL && bm <= TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn a2_certification() -> Check {
    let lp = LinearProblem::from_spec(&linear_problem()).map_err(err)?;
    let cf = closed_form(&lp).map_err(err)?;
    let cert = certify(&cf, 100_000, 5, RngSpec::new(2024)).map_err(err)?;
    let worst = cert
        .probes
        .iter()
        .map(|p| (p.mc_estimate - p.closed_form).abs() / p.standard_error)
        .fold(0.0, f64::max);
    let detail = format!(
        "{} of {} probes within 3 SE at M = 1e5 (worst {worst:.2} SE)",
        cert.probes.len() - cert.failures(),
        cert.probes.len()
    );
    if cert.passed() && cert.probes.len() == 5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn a3_rate() -> Check {
    let spec = linear_problem();
    let scheme = SchemeConfig::default();
    let cfg = StudyConfig::default();
    let pinned = cfg.partition_sizes == [4, 8, 16, 32, 64]
        && cfg.b_paths == 2000
        && cfg.crn
        && cfg.moment == 2
        && cfg.slope_window == [0.4, 0.65]
        && scheme.quadrature_nodes == 12
        && scheme.grid.nodes == 129;
    if !pinned {
        return Err(format!(
            "headline configuration drifted: {cfg:?}, {scheme:?}"
        ));
    }
    let oracle = certified(&spec, 100_000, 20240601)?;
    let report = run_convergence_study(&spec, &scheme, &cfg, &oracle, 20240601).map_err(err)?;
    let z = match &report.z_slope {
        SlopeOutcome::Fitted(f) => format!(
            "Z-proxy slope {:.3} ± {:.3} (informational ≥ {Z_SLOPE_THRESHOLD}: {})",
            f.slope,
            f.half_width,
            if f.slope >= Z_SLOPE_THRESHOLD {
                "met"
            } else {
                "not met"
            }
        ),
        other => format!("Z-proxy slope {other:?}"),
    };
    match &report.y_slope {
        SlopeOutcome::Fitted(f) => {
            let detail = format!(
                "Y slope {:.3} ± {:.3} in [0.4, 0.65]; {z}",
                f.slope, f.half_width
            );
            if report.y_slope_in_window() == Some(true) {
                Ok(detail)
            } else {
                Err(detail)
            }
        }
        other => Err(format!("Y slope not fitted: {other:?}")),
    }
}

fn a4_holder() -> Check {
    const TOL: f64 = 1e-12;
    let scheme = SchemeConfig::default();
    let cfg = HolderConfig::default();
    let oracle_rows = |spec: &ProblemSpec, seed: u64| -> Result<_, String> {
        let oracle = certified(spec, 20_000, seed)?;
        run_holder_study(spec, &scheme, &cfg, &oracle, seed).map_err(err)
    };
    let bm = oracle_rows(&brownian(), 41)?;
    let bm_dev = bm
        .rows_for(RatioSource::Oracle)
        .map(|r| (r.y_ratio - 1.0).abs())
        .fold(0.0, f64::max);
    let c0 = 0.5;
    let cn = oracle_rows(&constant_noise(1.5, c0), 42)?;
    let cn_dev = cn
        .rows_for(RatioSource::Oracle)
        .map(|r| (r.y_ratio - c0 * c0).abs())
        .fold(0.0, f64::max);
    let lin = oracle_rows(&linear_problem(), 43)?;
    let gaps: Vec<f64> = lin.rows.iter().map(|r| r.t - r.s).collect();
    let smallest_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let detail = format!(
        "W_T ratio dev {bm_dev:.1e}, constant-g ratio dev {cn_dev:.1e} (tol {TOL:.0e}); \
         linear problem growth flag {} over gaps down to 2^{:.0}",
        if lin.any_growth() { "RAISED" } else { "none" },
        smallest_gap.log2()
    );
    if bm_dev <= TOL && cn_dev <= TOL && !lin.any_growth() && !bm.any_growth() && !cn.any_growth() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// SplitMix64: a self-contained source of probe parameters.
struct Probe(u64);

impl Probe {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn a5_fixed_point() -> Check {
    let mut rng = Probe(5);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for k in 0..1000 {
        let l = rng.range(0.1, 5.0);
        let h = rng.range(0.01, 0.9) / l;
        let eta = rng.range(-5.0, 5.0);
        let z = rng.range(-2.0, 2.0);
        let (a, b) = (rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
        // Lipschitz constant exactly l in y.
        let f = move |t: f64, y: f64, z: f64| l * (y + a * z + b * t).sin();
        match picard_solve_implicit(eta, z, 0.3, h, f, 1e-12, 1000) {
            Ok(out) => {
                if let Some(r) = out.max_ratio {
                    let excess = r - h * l;
                    worst_excess = worst_excess.max(excess);
                    if excess > 1e-9 {
                        failures.push(format!("probe {k}: ratio {r} > hL {}", h * l));
                    }
                }
            }
            Err(e) => failures.push(format!("probe {k}: {e}")),
        }
    }

    let sin = Generator::SinLinear {
        alpha: 0.2,
        beta: 0.1,
        epsilon: 0.25,
        forcing: Forcing::Zero,
    };
    let mut worst_bisect: f64 = 0.0;
    for k in 0..100 {
        let eta = rng.range(-4.0, 4.0);
        let z = rng.range(-1.0, 1.0);
        let h = rng.range(0.01, 1.0);
        let t = rng.range(0.0, 1.0);
        let y = picard_solve_implicit(eta, z, t, h, |t, y, z| sin.eval(t, y, z), 1e-14, 200)
            .map_err(|e| format!("sin probe {k}: {e}"))?
            .value;
        let reference = bisect(|y| y - eta - h * sin.eval(t, y, z), -50.0, 50.0);
        worst_bisect = worst_bisect.max((y - reference).abs());
    }

    let mut mesh_mismatch = Vec::new();
    let mut cases: Vec<(usize, f64)> = vec![
        (1, 1.0),
        (2, 2.0),
        (4, 4.0),
        (4, 3.999_999),
        (8, 8.0),
        (10, 10.0),
    ];
    for _ in 0..500 {
        let n = 1 + (rng.next() * 40.0) as usize;
        let l = rng.range(0.0, 2.0 * n as f64);
        cases.push((n, l));
    }
    for &(n, l) in &cases {
        let s = spec(Terminal::Identity, Generator::Zero, BackwardCoeff::Zero, l);
        let partition = build_uniform_partition(n, 1.0).map_err(err)?;
        let coarse = partition.mesh() * l >= 1.0;
        let raised = matches!(
            validate_mesh_condition(&partition, &s),
            Err(ProblemError::MeshTooCoarse { .. })
        );
        if coarse != raised {
            mesh_mismatch.push(format!("n={n} L={l}"));
        }
    }

    let detail = format!(
        "1000 Picard probes, max(ratio − hL) {worst_excess:.1e}; sin case vs bisection {worst_bisect:.1e}; \
         MeshTooCoarse matched mesh·L ≥ 1 in {}/{} cases",
        cases.len() - mesh_mismatch.len(),
        cases.len()
    );
    if failures.is_empty() && worst_bisect <= 1e-10 && mesh_mismatch.is_empty() {
        Ok(detail)
    } else {
        failures.extend(mesh_mismatch);
        Err(format!("{detail}; {}", failures.join(", ")))
    }
}

/// ∫ x^d e^{−x²} dx.
fn hermite_moment(d: usize) -> f64 {
    if d % 2 == 1 {
        return 0.0;
    }
    let mut m = std::f64::consts::PI.sqrt();
    for k in (1..d).step_by(2) {
        m *= k as f64 / 2.0;
    }
    m
}

fn a6_estimators() -> Check {
    let mut gh_worst: f64 = 0.0;
    for m in 1..=32 {
        let rule = gauss_hermite_rule(m).map_err(err)?;
        for d in 0..2 * m {
            let q = rule.integrate(|x| x.powi(d as i32));
            let scale = rule.integrate(|x| x.abs().powi(d as i32));
            let exact = hermite_moment(d);
            gh_worst = gh_worst.max((q - exact).abs() / exact.abs().max(scale));
        }
    }

    let partition = build_uniform_partition(8, 1.0).map_err(err)?;
    let bundle = sample_bundle(&partition, 4000, RngSpec::new(6), false).map_err(err)?;
    let states: Vec<[f64; 2]> = (0..bundle.path_count())
        .map(|p| [bundle.w_values(p)[4], bundle.b_future(p)[4]])
        .collect();
    let target = |[w, b]: [f64; 2]| 1.0 + 2.0 * w - b + 0.5 * w * w * b - 0.3 * b * b * b;
    let values: Vec<f64> = states.iter().map(|&s| target(s)).collect();
    let fit = lsmc_fit(&states, &values, PolynomialBasis::full(3)).map_err(err)?;
    let span_worst = [[0.0, 0.0], [1.3, -0.7], [-2.0, 1.1], [0.4, 2.2]]
        .iter()
        .map(|&s| (fit.predict(s) - target(s)).abs())
        .fold(0.0, f64::max);

    let spec = linear_problem();
    let pairing = validate_mesh_condition(&partition, &spec).map_err(err)?;
    let bundle = sample_bundle(&partition, 100_000, RngSpec::new(3), false).map_err(err)?;
    let lsmc = SchemeConfig {
        engine: Engine::Lsmc,
        lsmc_degree: 3,
        ..SchemeConfig::default()
    };
    let reg = solve_bundle(&pairing, &bundle, &lsmc).map_err(err)?;
    let pw = solve_bundle(&pairing, &bundle, &SchemeConfig::default()).map_err(err)?;
    let y0 = |s: &bdsde::scheme::DiscreteSolution| -> Vec<f64> {
        (0..s.path_count).map(|p| s.y_path(p)[0]).collect()
    };
    let (reg_mean, reg_se) = mean_and_standard_error(&y0(&reg));
    let (pw_mean, _) = mean_and_standard_error(&y0(&pw));
    let gap = (reg_mean - pw_mean).abs() / reg_se;

    let detail = format!(
        "Gauss–Hermite m=1..32 worst relative error {gh_worst:.1e}; LSMC span residual {span_worst:.1e}; \
         LSMC Y0 {reg_mean:.5} ± {reg_se:.5} vs pathwise {pw_mean:.5} ({gap:.2} SE)"
    );
    if gh_worst <= 1e-10 && span_worst <= 1e-9 && gap <= 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sha256_file(path: &Path) -> Result<String, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn run_cli(command: &str, config: &Path, out: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bdsde"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(err)?;
    if status.success() {
        Ok(())
    } else {
        Err(format!(
            "bdsde {command} --threads {threads} exited with {status}"
        ))
    }
}

fn a7_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let headline = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/headline.json");
    let text = std::fs::read_to_string(&headline).map_err(err)?;
    let mut cfg: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    // A smaller study keeps the four runs quick; the thread-count question
    // does not depend on the path count.
    cfg["study"]["b_paths"] = 300.into();
    cfg["solve"]["paths"] = 200.into();
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_vec_pretty(&cfg).map_err(err)?).map_err(err)?;
    let mut compared = Vec::new();
    for (command, artifact) in [
        ("solve", "solution.csv"),
        ("converge", "convergence.csv"),
        ("oracle-check", "oracle.csv"),
    ] {
        let hashes: Vec<String> = [1usize, 8]
            .iter()
            .map(|&threads| {
                let out: PathBuf = dir.path().join(format!("{command}-{threads}"));
                run_cli(command, &config, &out, threads)?;
                sha256_file(&out.join(artifact))
            })
            .collect::<Result<_, _>>()?;
        if hashes[0] != hashes[1] {
            return Err(format!(
                "{artifact}: {} (1 thread) vs {} (8 threads)",
                hashes[0], hashes[1]
            ));
        }
        compared.push(format!("{artifact} {}", &hashes[0][..12]));
    }
    Ok(format!(
        "1-thread and 8-thread hashes identical: {}",
        compared.join(", ")
    ))
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            id: "A1",
            name: "exactness",
            budget: Some(Duration::from_secs(1)),
            run: a1_exactness,
        },
        Criterion {
            id: "A2",
            name: "oracle certification",
            budget: Some(Duration::from_secs(30)),
            run: a2_certification,
        },
        Criterion {
            id: "A3",
            name: "rate reproduction",
            budget: Some(Duration::from_secs(300)),
            run: a3_rate,
        },
        Criterion {
            id: "A4",
            name: "Hölder suite",
            budget: Some(Duration::from_secs(60)),
            run: a4_holder,
        },
        Criterion {
            id: "A5",
            name: "fixed-point suite",
            budget: Some(Duration::from_secs(1)),
            run: a5_fixed_point,
        },
        Criterion {
            id: "A6",
            name: "estimator suites",
            budget: Some(Duration::from_secs(10)),
            run: a6_estimators,
        },
        Criterion {
            id: "A7",
            name: "determinism",
            budget: None,
            run: a7_determinism,
        },
    ];
    println!(
        "acceptance: {} worker threads available",
        std::thread::available_parallelism().map_or(1, |n| n.get())
    );
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let timing = match c.budget {
            Some(b) => format!("{:.2} s of {} s budget", elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.2} s", elapsed.as_secs_f64()),
        };
        let over_budget = c.budget.is_some_and(|b| elapsed > b);
        let (ok, detail) = match result {
            Ok(d) if over_budget => (false, format!("{d}; over time budget")),
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        println!(
            "{} {}: {} ({detail}; {timing})",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("acceptance: all {} criteria passed", criteria.len());
}

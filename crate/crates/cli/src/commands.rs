//! Subcommand bodies. Each returns the artifacts it produced; the caller
//! writes them atomically together with the run manifest.

use bdsde::analysis::{run_convergence_study, run_holder_study, SlopeOutcome, Z_SLOPE_THRESHOLD};
use bdsde::oracle::{certify, closed_form, CertifiedOracle, LinearProblem};
use bdsde::paths::{sample_bundle, RngSpec};
use bdsde::scheme::solve_bundle;
use bdsde::{build_uniform_partition, validate_mesh_condition};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_CERTIFICATION, EXIT_SLOPE};

/// A named CSV body.
pub struct Artifact {
    pub file_name: &'static str,
    pub contents: Vec<u8>,
}

/// Result of a command that ran to completion. A non-zero `exit_code`
/// marks a complete run whose outcome failed a check (slope window,
/// certification); its artifacts are still written.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub exit_code: u8,
    pub note: Option<String>,
}

fn csv<F>(file_name: &'static str, write: F) -> Result<Artifact, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut contents = Vec::new();
    write(&mut contents).map_err(|e| CliError::io(file_name, e))?;
    Ok(Artifact {
        file_name,
        contents,
    })
}

/// Oracle seeds are derived from the run seed so that certification is
/// independent of the scheme's path streams.
const ORACLE_LABEL: u64 = 0x6f72_6163_6c65;

fn certified_oracle(cfg: &RunConfig, seed: u64) -> Result<CertifiedOracle, CliError> {
    let problem = LinearProblem::from_spec(&cfg.problem)?;
    let cf = closed_form(&problem)?.with_rate_bias(cfg.oracle.rate_bias);
    Ok(CertifiedOracle::certify(
        cf,
        cfg.oracle.samples,
        cfg.oracle.probes,
        RngSpec::new(seed).derive(ORACLE_LABEL),
    )?)
}

pub fn solve(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    cfg.scheme.validate()?;
    let s = cfg.solve;
    if s.steps == 0 {
        return Err(CliError::config("solve.steps: must be positive"));
    }
    if s.paths == 0 {
        return Err(CliError::config("solve.paths: must be positive"));
    }
    let partition = build_uniform_partition(s.steps, cfg.problem.horizon)?;
    let pairing = validate_mesh_condition(&partition, &cfg.problem)?;
    let bundle = sample_bundle(&partition, s.paths, RngSpec::new(seed), s.antithetic)?;
    let solution = solve_bundle(&pairing, &bundle, &cfg.scheme)?;
    println!(
        "solved {} paths on {} steps: Picard mean iterations {:.3}, extrapolations {}",
        s.paths,
        s.steps,
        solution.picard.mean_iterations(),
        solution.extrapolated
    );
    Ok(Outcome {
        artifacts: vec![csv("solution.csv", |w| solution.write_csv(w))?],
        exit_code: 0,
        note: None,
    })
}

fn describe_slope(name: &str, outcome: &SlopeOutcome, window: [f64; 2]) -> (String, bool) {
    match outcome {
        SlopeOutcome::Fitted(f) => {
            let ok = f.slope >= window[0] && f.slope <= window[1];
            let upper = if window[1].is_finite() {
                format!("{}", window[1])
            } else {
                "∞".to_string()
            };
            (
                format!(
                    "{name} slope {:.4} ± {:.4} (window [{}, {upper}]): {}",
                    f.slope,
                    f.half_width,
                    window[0],
                    if ok { "pass" } else { "fail" }
                ),
                ok,
            )
        }
        SlopeOutcome::Exact => (format!("{name}: exact (degenerate fit)"), true),
        SlopeOutcome::Degenerate { positive } => (
            format!("{name}: degenerate fit ({positive} positive-error points): fail"),
            false,
        ),
    }
}

pub fn converge(cfg: &RunConfig, seed: u64, strict: bool) -> Result<Outcome, CliError> {
    cfg.study
        .validate(&cfg.problem)
        .map_err(|e| CliError::from_analysis(e, "study"))?;
    let oracle = certified_oracle(cfg, seed)?;
    let report = run_convergence_study(&cfg.problem, &cfg.scheme, &cfg.study, &oracle, seed)
        .map_err(|e| CliError::from_analysis(e, "study"))?;
    println!("n      mesh        Y error^(1/p)   Z proxy^(1/p)   extrapolations");
    for r in &report.rows {
        println!(
            "{:<6} {:<11.6} {:<15.6e} {:<15.6e} {}",
            r.n,
            r.mesh,
            r.y_root(report.moment),
            r.z_root(report.moment),
            r.extrapolation_count
        );
    }
    let (y_line, y_ok) = describe_slope("Y error", &report.y_slope, report.slope_window);
    let (z_line, _) = describe_slope(
        "Z proxy (informational)",
        &report.z_slope,
        [Z_SLOPE_THRESHOLD, f64::INFINITY],
    );
    println!("{y_line}");
    println!("{z_line}");
    let artifact = csv("convergence.csv", |w| report.write_csv(w))?;
    let (exit_code, note) = if strict && !y_ok {
        (EXIT_SLOPE, Some(format!("strict mode: {y_line}")))
    } else {
        (0, None)
    };
    Ok(Outcome {
        artifacts: vec![artifact],
        exit_code,
        note,
    })
}

pub fn oracle_check(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let problem = LinearProblem::from_spec(&cfg.problem)?;
    let cf = closed_form(&problem)?.with_rate_bias(cfg.oracle.rate_bias);
    let cert = certify(
        &cf,
        cfg.oracle.samples,
        cfg.oracle.probes,
        RngSpec::new(seed).derive(ORACLE_LABEL),
    )?;
    for p in &cert.probes {
        println!(
            "probe {}: t={:.4} w={:+.4} B_T-B_t={:+.4} closed_form={:.8} mc={:.8} se={:.2e} {}",
            p.id,
            p.t,
            p.w,
            p.b_future,
            p.closed_form,
            p.mc_estimate,
            p.standard_error,
            if p.pass { "pass" } else { "FAIL" }
        );
    }
    let artifact = csv("oracle.csv", |w| cert.write_csv(w))?;
    let (exit_code, note) = if cert.passed() {
        println!("certified ({} probes)", cert.probes.len());
        (0, None)
    } else {
        let msg = format!(
            "certification failed: {} of {} probes outside 3 standard errors",
            cert.failures(),
            cert.probes.len()
        );
        println!("{msg}");
        (EXIT_CERTIFICATION, Some(msg))
    };
    Ok(Outcome {
        artifacts: vec![artifact],
        exit_code,
        note,
    })
}

pub fn holder(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    cfg.holder
        .validate(&cfg.problem)
        .map_err(|e| CliError::from_analysis(e, "holder"))?;
    let oracle = certified_oracle(cfg, seed)?;
    let report = run_holder_study(&cfg.problem, &cfg.scheme, &cfg.holder, &oracle, seed)
        .map_err(|e| CliError::from_analysis(e, "holder"))?;
    println!("source  s        gap        Y ratio          Z ratio");
    for r in &report.rows {
        let y = format!("{:.4} ± {:.4}", r.y_ratio, r.y_se);
        let z = format!("{:.4} ± {:.4}", r.z_ratio, r.z_se);
        println!(
            "{:<7} {:<8.4} {:<10.6} {y:<16} {z}",
            r.source.name(),
            r.s,
            r.t - r.s
        );
    }
    println!(
        "growth flag: {}",
        if report.any_growth() {
            "RAISED"
        } else {
            "none"
        }
    );
    Ok(Outcome {
        artifacts: vec![csv("holder.csv", |w| report.write_csv(w))?],
        exit_code: 0,
        note: None,
    })
}

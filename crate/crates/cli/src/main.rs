//! `bdsde` batch runner.
//!
//! Every subcommand reads one JSON config, writes its CSV output and a
//! `manifest.json` into the `--out` directory, and exits with
//! 0 (success), 1 (I/O), 2 (config), 3 (mesh too coarse), 4 (solver),
//! 5 (slope outside window with `--strict`) or 6 (certification failure).
//! CSV files are only written when the run completes; failed runs leave a
//! manifest describing the error and no CSV.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::Outcome;
use error::{CliError, EXIT_CONFIG, EXIT_IO};

/// Environment variable overriding the default worker-thread cap.
const THREADS_ENV: &str = "BDSDE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "bdsde",
    version,
    about = "Implicit BDSDE scheme: solves, convergence and Hölder studies, oracle certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a path bundle and run one scheme solve.
    Solve(CommonArgs),
    /// Run the convergence-rate study against the certified oracle.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Exit with status 5 when the fitted Y slope misses the window.
        #[arg(long)]
        strict: bool,
    },
    /// Certify the closed form against representation Monte Carlo.
    OracleCheck(CommonArgs),
    /// Run the Hölder-regularity study.
    Holder(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap (default: $BDSDE_THREADS, else all logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    status: &'a str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    config_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    artifact_version: &'static str,
    threads: usize,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<String>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::config(format!("{THREADS_ENV}: '{v}' is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::config("threads: must be at least 1"));
    }
    Ok(n)
}

/// Writes via a temporary file and rename so a crash never leaves a
/// truncated CSV under the final name.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn artifact_name(command: &str) -> &'static str {
    match command {
        "solve" => "solution.csv",
        "converge" => "convergence.csv",
        "oracle-check" => "oracle.csv",
        _ => "holder.csv",
    }
}

fn run(name: &str, args: &CommonArgs, strict: bool) -> ExitCode {
    let started = unix_now();
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return ExitCode::from(EXIT_IO);
    }
    let threads = match thread_cap(args.threads) {
        Ok(t) => t,
        Err(e) => return finish(name, args, started, None, None, 0, Err(e)),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    if let Err(e) = builder.build_global() {
        let err = CliError::new(EXIT_IO, format!("thread pool: {e}"));
        return finish(name, args, started, None, None, 0, Err(err));
    }
    let loaded = match config::load(&args.config) {
        Ok(l) => l,
        Err(e) => {
            return finish(
                name,
                args,
                started,
                None,
                None,
                rayon::current_num_threads(),
                Err(e),
            )
        }
    };
    let seed = args.seed.unwrap_or(loaded.config.seed);
    let cfg = &loaded.config;
    let result = match name {
        "solve" => commands::solve(cfg, seed),
        "converge" => commands::converge(cfg, seed, strict),
        "oracle-check" => commands::oracle_check(cfg, seed),
        "holder" => commands::holder(cfg, seed),
        _ => unreachable!("subcommand names are fixed"),
    };
    finish(
        name,
        args,
        started,
        Some(loaded.digest),
        Some(seed),
        rayon::current_num_threads(),
        result,
    )
}

fn finish(
    name: &str,
    args: &CommonArgs,
    started: f64,
    digest: Option<String>,
    seed: Option<u64>,
    threads: usize,
    result: Result<Outcome, CliError>,
) -> ExitCode {
    let mut outputs = Vec::new();
    let (status, code, message) = match result {
        Ok(outcome) => {
            let mut written = Ok(());
            for a in &outcome.artifacts {
                let path = args.out.join(a.file_name);
                written = write_atomic(&path, &a.contents);
                if written.is_err() {
                    break;
                }
                outputs.push(path.display().to_string());
            }
            match written {
                Ok(()) if outcome.exit_code == 0 => ("ok", 0, None),
                Ok(()) => ("check_failed", outcome.exit_code, outcome.note),
                Err(e) => ("error", e.code, Some(e.message)),
            }
        }
        Err(e) => ("error", e.code, Some(e.message)),
    };
    if let Some(m) = &message {
        eprintln!("error: {m}");
    }
    if status == "error" {
        // An output left over from an earlier run in the same directory
        // must not be mistaken for the result of this one.
        let _ = fs::remove_file(args.out.join(artifact_name(name)));
    }
    let manifest_path = args.out.join("manifest.json");
    outputs.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        command: name,
        status,
        exit_code: code,
        message,
        config_path: args.config.display().to_string(),
        config_digest: digest,
        seed,
        artifact_version: env!("CARGO_PKG_VERSION"),
        threads,
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
    };
    let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = write_atomic(&manifest_path, &body) {
        eprintln!("error: {e}");
        return ExitCode::from(if code == 0 { EXIT_IO } else { code });
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match &cli.command {
        Command::Solve(a) => run("solve", a, false),
        Command::Converge { common, strict } => run("converge", common, *strict),
        Command::OracleCheck(a) => run("oracle-check", a, false),
        Command::Holder(a) => run("holder", a, false),
    }
}

//! JSON run configuration. One file drives every subcommand; each section
//! other than `problem` is optional and falls back to its defaults.

use bdsde::analysis::{HolderConfig, StudyConfig};
use bdsde::scheme::SchemeConfig;
use bdsde::ProblemSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub holder: HolderConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

/// Single scheme solve over a sampled bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// Steps of the uniform partition.
    pub steps: usize,
    /// Joint (W, B) paths.
    pub paths: usize,
    pub antithetic: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            steps: 16,
            paths: 100,
            antithetic: false,
        }
    }
}

/// Certification of the closed form against representation Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub samples: usize,
    pub probes: usize,
    /// Test hook: perturbs the closed form's exponential time rate so that
    /// certification failures can be exercised. Leave at 0.
    pub rate_bias: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            probes: 5,
            rate_bias: 0.0,
        }
    }
}

/// A parsed config with the SHA-256 digest of the file it came from.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub digest: String,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses a config; errors name the JSON path of the offending field.
pub fn parse(bytes: &[u8]) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::config(inner.to_string())
        } else {
            CliError::config(format!("{path}: {inner}"))
        }
    })?;
    de.end()
        .map_err(|e| CliError::config(format!("trailing content: {e}")))?;
    Ok(config)
}

pub fn load(path: &std::path::Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&bytes)?;
    Ok(LoadedConfig {
        config,
        digest: digest(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {
            "terminal": {"family": "identity"},
            "generator": {"family": "zero"},
            "backward_coeff": {"family": "zero"},
            "lipschitz_L": 0.0,
            "time_lipschitz_L1": 0.0,
            "horizon_T": 1.0
        }
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(MINIMAL.as_bytes()).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.solve, SolveConfig::default());
        assert_eq!(c.scheme, SchemeConfig::default());
        assert_eq!(c.oracle.samples, 100_000);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replacen("\"problem\"", "\"solve\": {\"stepz\": 3}, \"problem\"", 1);
        let err = parse(text.as_bytes()).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("solve"), "{}", err.message);
        assert!(err.message.contains("stepz"), "{}", err.message);
    }

    #[test]
    fn wrong_type_names_the_path() {
        let text = MINIMAL.replacen(
            "\"problem\"",
            "\"scheme\": {\"quadrature_nodes\": \"x\"}, \"problem\"",
            1,
        );
        let err = parse(text.as_bytes()).unwrap_err();
        assert!(
            err.message.starts_with("scheme.quadrature_nodes"),
            "{}",
            err.message
        );
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

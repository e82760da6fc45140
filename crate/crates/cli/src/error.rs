//! Error classification into process exit codes.

use bdsde::analysis::AnalysisError;
use bdsde::oracle::OracleError;
use bdsde::paths::PathsError;
use bdsde::scheme::SchemeError;
use bdsde::ProblemError;

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MESH: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_SLOPE: u8 = 5;
pub const EXIT_CERTIFICATION: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        Self::new(EXIT_IO, format!("{context}: {err}"))
    }

    /// Classifies a study error; configuration problems are reported under
    /// the config section that produced them.
    pub fn from_analysis(e: AnalysisError, section: &str) -> Self {
        match e {
            AnalysisError::InvalidConfig(m) => Self::config(format!("{section}.{m}")),
            other => other.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::MeshTooCoarse { .. } => Self::new(EXIT_MESH, e.to_string()),
            _ => Self::config(format!("problem: {e}")),
        }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::InvalidConfig(m) => Self::config(format!("scheme: {m}")),
            SchemeError::Problem(p) => p.into(),
            SchemeError::Paths(p) => p.into(),
            other => Self::new(EXIT_SOLVER, other.to_string()),
        }
    }
}

impl From<PathsError> for CliError {
    fn from(e: PathsError) -> Self {
        match e {
            PathsError::EmptyBundle | PathsError::OddAntithetic(_) => {
                Self::config(format!("solve: {e}"))
            }
            PathsError::Partition(p) => p.into(),
            PathsError::Io(io) => Self::io("path bundle", io),
            other => Self::new(EXIT_SOLVER, other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::CertificationFailed { .. } => Self::new(EXIT_CERTIFICATION, e.to_string()),
            other => Self::config(format!("oracle: {other}")),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InvalidConfig(m) => Self::config(m),
            AnalysisError::Problem(p) => p.into(),
            AnalysisError::Scheme(s) => s.into(),
            AnalysisError::Paths(p) => p.into(),
            AnalysisError::Oracle(o) => o.into(),
            other => Self::new(EXIT_SOLVER, other.to_string()),
        }
    }
}

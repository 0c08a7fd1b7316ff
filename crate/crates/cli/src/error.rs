use std::path::PathBuf;

use scrambled_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("checksum mismatch for {file}: manifest has {expected}, file has {actual}")]
    ChecksumMismatch { file: String, expected: String, actual: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CliError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 I/O or solver failure, 2 validation or domain error,
    /// 3 oracle promise violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                CoreError::PromiseViolation(_) => 3,
                CoreError::EmptySpectrum
                | CoreError::NonMonotoneValues { .. }
                | CoreError::LengthMismatch { .. }
                | CoreError::ZeroMultiplicity { .. }
                | CoreError::MultiplicitySumMismatch { .. }
                | CoreError::InvalidParameter { .. }
                | CoreError::MarkedCountOutOfRange { .. }
                | CoreError::DimensionTooLarge { .. }
                | CoreError::DegenerateGround { .. }
                | CoreError::Parse(_) => 2,
                _ => 1,
            },
            CliError::InvalidParameter { .. }
            | CliError::Config { .. }
            | CliError::Manifest { .. }
            | CliError::ChecksumMismatch { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.name(),
            CliError::InvalidParameter { .. } => "InvalidParameter",
            CliError::Config { .. } => "Config",
            CliError::Io { .. } => "Io",
            CliError::Manifest { .. } => "Manifest",
            CliError::ChecksumMismatch { .. } => "ChecksumMismatch",
        }
    }
}

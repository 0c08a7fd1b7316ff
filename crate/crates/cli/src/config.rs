//! TOML run configuration. Precedence is defaults < file < flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cli::{BackendArg, GroverScheduleArg, ReadoutArg, SolverArg};
use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_SCAN_POINTS: usize = 512;
pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_GRID: usize = scrambled_core::schedule::DEFAULT_KNOTS;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub fixed_steps: Option<u64>,
    pub out: Option<PathBuf>,
    pub gnuplot: Option<bool>,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub anneal: AnnealSection,
    #[serde(default)]
    pub dj: DjSection,
    #[serde(default)]
    pub grover: GroverSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub points: Option<usize>,
    pub solver: Option<SolverArg>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub samples: Option<usize>,
    pub grid: Option<usize>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSection {
    pub epsilon: Option<f64>,
    pub grid: Option<usize>,
    pub simulate: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DjSection {
    pub grid: Option<usize>,
    pub backend: Option<BackendArg>,
    pub readout: Option<ReadoutArg>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroverSection {
    pub marked: Option<u64>,
    pub schedule: Option<GroverScheduleArg>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|reason| CliError::Config {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spectrum has no output values")]
    EmptySpectrum,

    #[error("output values must be strictly increasing (violated at index {index})")]
    NonMonotoneValues { index: usize },

    #[error("values and multiplicities differ in length ({values} vs {multiplicities})")]
    LengthMismatch { values: usize, multiplicities: usize },

    #[error("multiplicity of class {index} is zero")]
    ZeroMultiplicity { index: usize },

    #[error("multiplicities sum to {sum}, expected 2^{n} = {expected}")]
    MultiplicitySumMismatch { n: u32, sum: String, expected: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("marked count {marked} out of range [1, 2^{n})")]
    MarkedCountOutOfRange { n: u32, marked: u64 },

    #[error("dimension 2^{n} exceeds oracle cap 2^{cap}")]
    DimensionTooLarge { n: u32, cap: u32 },

    #[error("ground state degenerate at s = {s} (gap {gap:e})")]
    DegenerateGround { s: f64, gap: f64 },

    #[error("secular root {index} could not be bracketed at s = {s}")]
    BracketingFailure { s: f64, index: usize },

    #[error("gap is not positive at s = {s} (g = {gap:e})")]
    NonPositiveGap { s: f64, gap: f64 },

    #[error("adaptive quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("path is ill-defined: {0}")]
    PathIllDefined(String),

    #[error("runtime integral diverges: {0}")]
    DivergentRuntime(String),

    #[error("t'(s) is singular at the endpoint s = {s}")]
    EndpointSingularity { s: f64 },

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("tolerance not met: {0}")]
    ToleranceNotMet(String),

    #[error("oracle promise violated: {0}")]
    PromiseViolation(String),

    #[error("scaling fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Variant name, for diagnostics that need a stable identifier.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptySpectrum => "EmptySpectrum",
            Error::NonMonotoneValues { .. } => "NonMonotoneValues",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ZeroMultiplicity { .. } => "ZeroMultiplicity",
            Error::MultiplicitySumMismatch { .. } => "MultiplicitySumMismatch",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::MarkedCountOutOfRange { .. } => "MarkedCountOutOfRange",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::DegenerateGround { .. } => "DegenerateGround",
            Error::BracketingFailure { .. } => "BracketingFailure",
            Error::NonPositiveGap { .. } => "NonPositiveGap",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::PathIllDefined(_) => "PathIllDefined",
            Error::DivergentRuntime(_) => "DivergentRuntime",
            Error::EndpointSingularity { .. } => "EndpointSingularity",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::ToleranceNotMet(_) => "ToleranceNotMet",
            Error::PromiseViolation(_) => "PromiseViolation",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::Parse(_) => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

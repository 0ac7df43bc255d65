use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("covariance matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("private information is degenerate: r_theta = {r_theta} must exceed rho_xtheta^2 = {rho_sq}")]
    DegeneratePrivateInfo { r_theta: f64, rho_sq: f64 },

    #[error("variance must be positive, got {name} = {value}")]
    NonpositiveVariance { name: &'static str, value: f64 },

    #[error("conditioning block is singular")]
    SingularConditioningBlock,

    #[error("covariance block is singular")]
    SingularBlock,

    #[error("index sets overlap")]
    OverlappingSets,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("side information fields are required")]
    MissingSideInformation,

    #[error("invalid bracket ({lo}, {hi})")]
    InvalidBracket { lo: f64, hi: f64 },

    #[error("objective returned a non-finite value at x = {x}")]
    NonFiniteEvaluation { x: f64 },

    #[error(
        "argmin stayed at the bracket edge after {expansions} expansions (bracket ({lo}, {hi}))"
    )]
    BracketExpansionExceeded { expansions: usize, lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("strategy is inconsistent with the model: {0}")]
    InconsistentStrategy(String),

    #[error("internal inconsistency in {what}: {lhs} vs {rhs}")]
    InternalInconsistency {
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("matched-parameter fixed point not confirmed: {0}")]
    FixedPointNotConfirmed(String),
}

impl Error {
    /// True for errors that signal a failed self-check rather than bad input.
    pub fn is_consistency_failure(&self) -> bool {
        matches!(
            self,
            Error::InternalInconsistency { .. } | Error::FixedPointNotConfirmed(_)
        )
    }
}

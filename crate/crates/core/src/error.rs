use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigen-solver failed: {0}")]
    EigenFailure(String),

    #[error("the curve pipeline needs a pencil of three forms (k = 2), got k = {k}")]
    UnsupportedK { k: usize },

    #[error("mesh vertex {vertex} lies on the spectral curve (min |eigenvalue| = {min_abs_eigenvalue:e})")]
    VertexOnCurve { vertex: usize, min_abs_eigenvalue: f64 },

    #[error("determinant sign disagrees with inertia label at vertex {vertex}")]
    LabelConflict { vertex: usize },

    #[error("epsilon did not stabilize after {halvings} halvings (last epsilon {last_epsilon:e})")]
    NoStabilization { halvings: usize, last_epsilon: f64 },

    #[error("filtration levels are not nested at level {index}")]
    NestingViolation { index: usize },

    #[error("{ovals} ovals exceed the cap {cap} for a curve of this degree")]
    HarnackExceeded { ovals: usize, cap: usize },

    #[error("boundary ovals ({ovals}) disagree with the Euler characteristic count ({euler}) at level {index}")]
    EulerMismatch { index: usize, ovals: usize, euler: i64 },
}

impl Error {
    /// Stable machine-readable identifier, used in JSON error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EigenFailure(_) => "eigen_failure",
            Error::UnsupportedK { .. } => "unsupported_k",
            Error::VertexOnCurve { .. } => "vertex_on_curve",
            Error::LabelConflict { .. } => "label_conflict",
            Error::NoStabilization { .. } => "no_stabilization",
            Error::NestingViolation { .. } => "nesting_violation",
            Error::HarnackExceeded { .. } => "harnack_exceeded",
            Error::EulerMismatch { .. } => "euler_mismatch",
        }
    }
}

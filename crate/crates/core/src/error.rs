use thiserror::Error;

/// Errors raised while building, solving or analysing a problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient `{field}` returned a non-finite value at (x={x}, t={t})")]
    Evaluation { field: &'static str, x: f64, t: f64 },

    #[error("sign violation: {0}")]
    SignViolation(String),

    #[error("floor violation: {0}")]
    FloorViolation(String),

    #[error("compatibility violation: {0}")]
    CompatibilityViolation(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("boundary and interior layers overlap: {0}")]
    LayersOverlap(String),

    #[error("mesh is not strictly increasing at interval {index} (h = {step:e})")]
    NonMonotone { index: usize, step: f64 },

    #[error("zero pivot in row {row}")]
    ZeroPivot { row: usize },

    #[error("M-matrix structure violated in {count} row(s), first at row {first_row}")]
    MMatrixViolation { count: usize, first_row: usize },

    #[error("solve residual {residual:e} exceeds bound {bound:e}")]
    ResidualExceeded { residual: f64, bound: f64 },

    #[error("stability bound violated: max |U| = {max_abs} > {bound}")]
    StabilityViolation { max_abs: f64, bound: f64 },

    #[error("non-finite value in solution at node {index}")]
    NonFiniteValue { index: usize },

    #[error("meshes are not nested: {0}")]
    MeshMismatch(String),

    #[error("manufactured solution residual {residual:e} at (x={x}, t={t}) exceeds 1e-8")]
    ManufacturedMismatch { residual: f64, x: f64, t: f64 },

    #[error("unknown example `{0}`")]
    UnknownExample(String),

    #[error("malformed report: {0}")]
    Parse(String),

    #[error("at N={n}, M={m}, step j={j}: {source}")]
    AtStep {
        n: usize,
        m: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Evaluation { .. } => "EvaluationFailure",
            Error::SignViolation(_) => "SignViolation",
            Error::FloorViolation(_) => "FloorViolation",
            Error::CompatibilityViolation(_) => "CompatibilityViolation",
            Error::UnsupportedRegime(_) => "UnsupportedRegime",
            Error::LayersOverlap(_) => "LayersOverlap",
            Error::NonMonotone { .. } => "NonMonotone",
            Error::ZeroPivot { .. } => "ZeroPivot",
            Error::MMatrixViolation { .. } => "MMatrixViolation",
            Error::ResidualExceeded { .. } => "ResidualExceeded",
            Error::StabilityViolation { .. } => "StabilityViolation",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::MeshMismatch(_) => "MeshMismatch",
            Error::ManufacturedMismatch { .. } => "ManufacturedMismatch",
            Error::UnknownExample(_) => "UnknownExample",
            Error::Parse(_) => "ParseError",
            Error::AtStep { source, .. } => source.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

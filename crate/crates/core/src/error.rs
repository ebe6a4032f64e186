use thiserror::Error;

/// Errors raised across the library.
///
/// Variants map onto the CLI failure classes through [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid exponents (p = {p}, q = {q}): need 1 < p <= q")]
    InvalidExponents { p: f64, q: f64 },

    #[error("subcritical exponents: q(p-1) = {value} <= 2 (p = {p}, q = {q})")]
    SubcriticalExponents { p: f64, q: f64, value: f64 },

    #[error("condition (p-1)^2 (q-1) > 1 violated: value = {value} (p = {p}, q = {q})")]
    ConditionViolated { p: f64, q: f64, value: f64 },

    #[error("invalid kappa choice: {0}")]
    InvalidKappa(String),

    #[error("exponent ladder did not reach the threshold after {0} steps")]
    LadderDiverged(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("profile cannot be scaled into the requested class: {0}")]
    ProfileUnscalable(String),

    #[error("radial tail at r_max too large: integrand {integrand:e} exceeds {tol:e}")]
    TruncationWarning { integrand: f64, tol: f64 },

    #[error("time-truncation tail {estimate:e} exceeds tolerance {tol:e}")]
    TailTooFat { estimate: f64, tol: f64 },

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("no contraction: ratios {ratios:?} above {bound} at iteration {iteration}")]
    NoContraction {
        iteration: usize,
        ratios: Vec<f64>,
        bound: f64,
    },

    #[error("iterate left the contraction ball: distance {distance:e} > {limit:e}")]
    LeftDomain { distance: f64, limit: f64 },

    #[error("fixed-point iteration diverged at iteration {0}")]
    Diverged(usize),

    #[error("intermediate data outside admissible range: sup {sup:e} > {bound:e} (component {component})")]
    RangeMismatch {
        component: usize,
        sup: f64,
        bound: f64,
    },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("wrong regime for this operation: {0}")]
    WrongRegime(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the failure class of this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidExponents { .. }
            | Error::SubcriticalExponents { .. }
            | Error::ConditionViolated { .. }
            | Error::InvalidKappa(_)
            | Error::InvalidGrid(_)
            | Error::ProfileUnscalable(_)
            | Error::WrongRegime(_)
            | Error::Config(_)
            | Error::Io(_) => 2,
            Error::LadderDiverged(_)
            | Error::NoContraction { .. }
            | Error::LeftDomain { .. }
            | Error::Diverged(_)
            | Error::RangeMismatch { .. }
            | Error::LatticeMismatch
            | Error::DegenerateSeries(_) => 3,
            Error::TruncationWarning { .. } | Error::TailTooFat { .. } => 4,
            Error::Verification(_) => 5,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

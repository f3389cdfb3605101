use thiserror::Error;

/// Errors raised by the bound engine, the model layer and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("declared norm {norm} is violated at x = {location}: sampled |value| = {sampled}")]
    NormViolation {
        norm: &'static str,
        location: f64,
        sampled: f64,
    },

    #[error("model contract violated ({condition}) at coordinate {coordinate}: z = {z}")]
    ContractViolation {
        condition: String,
        coordinate: String,
        z: f64,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported moment order {0}")]
    UnsupportedOrder(u32),

    #[error("missing moment entry {0}")]
    MissingMoment(String),

    #[error("epsilon must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    #[error("no default epsilon for model `{0}`; supply one explicitly")]
    EpsilonRequired(String),

    #[error("only {accepted} of the required {required} replicates satisfied the conditioning event")]
    InsufficientConditionalSamples { accepted: usize, required: usize },

    #[error("moment oracle unavailable for model `{0}`")]
    OracleUnavailable(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("logistic MLE does not exist: data are separated ({0})")]
    Separation(String),

    #[error("hessian is singular at iteration {0}")]
    SingularHessian(usize),

    #[error("solver did not converge within {iterations} iterations (gradient norm {grad_norm:e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },

    #[error("quadrature did not converge (estimated error {0:e})")]
    QuadratureNonconvergence(f64),

    #[error("{failed} of {reps} replicates failed to fit, above the 0.1% limit")]
    ExcessiveFitFailures { failed: usize, reps: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NormViolation { .. }
                | Error::DimensionMismatch(_)
                | Error::UnsupportedOrder(_)
                | Error::NonpositiveEpsilon(_)
                | Error::EpsilonRequired(_)
                | Error::UnknownModel(_)
                | Error::OracleUnavailable(_)
                | Error::InvalidParameter(_)
                | Error::InvalidData(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

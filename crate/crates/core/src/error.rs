use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("singular Gram matrix: {0}")]
    SingularGram(String),

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("{0} is not supported by this kernel")]
    UnsupportedFunctional(&'static str),

    #[error("input is not positive semi-definite: {0}")]
    NonPsdInput(String),

    #[error("invalid Gaussian density: {0}")]
    InvalidDensity(String),

    #[error("Monte Carlo integration failed: {0}")]
    IntegratorFailure(String),

    #[error("sampler failed: {0}")]
    SamplerFailure(String),

    #[error("posterior is not Gaussian with observation-independent covariance")]
    NonGaussianPosterior,

    #[error("objective is unbounded or non-finite for every candidate action")]
    UnboundedObjective,

    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("every criterion value is non-finite")]
    AllValuesNonFinite,

    #[error("observation {observation} has zero probability under experiment {experiment}")]
    ZeroProbabilityObservation { experiment: String, observation: usize },

    #[error("problem has no state-to-state loss table")]
    MissingLossTable,

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid problem at {path}: {message}")]
    InvalidProblem { path: String, message: String },
}

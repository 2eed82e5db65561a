use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("diffusion coefficient is non-positive ({value}) at x = {x}")]
    NonPositiveSigma { x: f64, value: f64 },

    #[error("simulation produced a non-finite value on path {path} at fine step {step}")]
    SimulationDiverged { path: usize, step: usize },

    #[error("spline basis needs at least one knot interval (got K = {0})")]
    DegenerateKnots(usize),

    #[error("sample was stored without its fine sub-grid increments")]
    MissingFineGrid,

    #[error("design matrix is numerically singular (min eigenvalue {min_eig:e}, max {max_eig:e}); reduce the dimension or add data")]
    SingularDesign { min_eig: f64, max_eig: f64 },

    #[error("Gram matrix is rank deficient (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    RankDeficient { min_eig: f64, max_eig: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    QuadratureFailure { a: f64, b: f64, estimate: f64 },

    #[error("cannot build {requested} codewords of length {m} with distance >= {min_distance}")]
    CodebookInfeasible {
        requested: usize,
        m: usize,
        min_distance: usize,
    },

    #[error("rate ladder needs at least {required} rungs (got {got})")]
    InsufficientRungs { required: usize, got: usize },

    #[error("slope fit needs distinct abscissae")]
    DegenerateAbscissae,

    #[error("slope fit needs at least 3 points (got {0})")]
    TooFewPoints(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonPositiveSigma { .. }
            | Error::SimulationDiverged { .. }
            | Error::SingularDesign { .. }
            | Error::RankDeficient { .. }
            | Error::QuadratureFailure { .. }
            | Error::CodebookInfeasible { .. }
            | Error::DegenerateAbscissae
            | Error::TooFewPoints(_) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

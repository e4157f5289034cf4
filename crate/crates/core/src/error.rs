use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("gram matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("gram matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("lattice enumeration would visit {count} candidates, cap is {cap}")]
    BoundTooLarge { count: u128, cap: u128 },
    #[error("grid resolution {0} is below the minimum of 4 points per axis")]
    ResolutionTooSmall(usize),
    #[error("right-hand side has non-zero mean {mean:e} (max |rhs| = {max_abs:e})")]
    NonZeroMean { mean: f64, max_abs: f64 },
    #[error("initial data must be positive (min = {0:e})")]
    NonPositiveInitialData(f64),
    #[error("step rejected: positivity lost at rho = {rho} after {rejections} halvings")]
    StabilityViolation { rho: f64, rejections: usize },
    #[error("non-finite value encountered at {0}")]
    NonFinite(String),
    #[error("step budget of {0} exhausted before reaching the target")]
    MaxStepsExceeded(usize),
    #[error("upper barrier blows up: C rho^-n = {0} >= 1")]
    UpperBarrierBlowup(f64),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("surface leaves the sampled radial range: rho = {rho} outside [{lo}, {hi}]")]
    SurfaceOutOfRange { rho: f64, lo: f64, hi: f64 },
    #[error("perturbation has non-zero mean {0:e}")]
    NotZeroMean(f64),
    #[error("metric is singular at the requested node")]
    SingularMetric,
    #[error("finite-difference stencil leaves the sampled range: {0}")]
    StencilOutOfRange(String),
    #[error("outer metric does not dominate the inner one (min eigenvalue of Q = {0:e})")]
    NotDominated(f64),
    #[error("boundary data h must be positive (min = {0:e})")]
    NonPositiveH(f64),
    #[error("field length {got} does not match grid node count {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

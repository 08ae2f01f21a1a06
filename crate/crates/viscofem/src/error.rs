use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel is not contractive: kappa = {kappa} >= 1")]
    NonContractiveKernel { kappa: f64 },
    #[error("parameter must be positive: {0}")]
    NonPositiveParameter(String),
    #[error("quadrature did not reach tolerance: {0}")]
    QuadratureFailure(String),
    #[error("slab [{start}, {end}] does not start at the last update time {last}")]
    NonContiguousSlab { start: f64, end: f64, last: f64 },
    #[error("kernel is not square integrable (rho = {rho} <= 1/2)")]
    KernelNotSquareIntegrable { rho: f64 },
    #[error("meshes do not share a refinement forest")]
    UnrelatedMeshes,
    #[error("degenerate cell {0}")]
    DegenerateCell(usize),
    #[error("unsupported norm exponent l = {0}")]
    UnsupportedExponent(i32),
    #[error("incompatible time slabbing: {0}")]
    IncompatibleSlabbing(String),
    #[error("singular mass matrix")]
    SingularMass,
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("mesh family violation: {0}")]
    MeshFamilyViolation(String),
    #[error("incompatible dual discretization: {0}")]
    IncompatibleDualDiscretization(String),
    #[error("iteration budget of {iterations} exceeded")]
    BudgetExceeded { iterations: usize },
    #[error("invalid time partition: {0}")]
    InvalidPartition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

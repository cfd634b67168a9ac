use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |M - M^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("configuration count {count} exceeds the enumeration limit {limit}")]
    ConfigurationOverflow { count: u128, limit: u128 },
    #[error("partition function is zero")]
    ZeroPartition,
    #[error("trace of the cyclic product is not positive ({trace:e})")]
    ZeroTrace { trace: f64 },
    #[error("initial probability matrix must be diagonal (max off-diagonal {offdiag:e})")]
    NotDiagonal { offdiag: f64 },
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("factor entries must be nonnegative and finite ({context})")]
    NegativeFactor { context: String },
    #[error("Gaussian width {width:e} under-resolved by grid spacing {delta:e} (need width >= 2*delta)")]
    UnderResolved { width: f64, delta: f64 },
    #[error("phase argument |z| = {z:e} exceeds the bound {bound}")]
    PhaseBound { z: f64, bound: f64 },
    #[error("exponent {arg:e} outside the representable range")]
    ExponentOverflow { arg: f64 },
    #[error("zero marginal at site {site}, state {state}")]
    ZeroMarginal { site: usize, state: usize },
    #[error("inconsistent marginals: mismatch {mismatch:e} ({context})")]
    InconsistentMarginals { mismatch: f64, context: String },
    #[error("quadrature window too narrow: tail mass {tail:e}")]
    WindowTooNarrow { tail: f64 },
    #[error("amplitude vanishes at x = {x}")]
    VanishingAmplitude { x: f64 },
    #[error("matrix is singular or ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("step too large: dt * |J| = {value:e} > {limit}")]
    StepTooLarge { value: f64, limit: f64 },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("matrix is not symmetric (max |M - M^T| = {deviation:e})")]
    NotSymmetric { deviation: f64 },
    #[error("negative or non-finite message at site {site}, state {state}")]
    InvalidMessage { site: usize, state: usize },
    #[error("clamped configuration ({x1}, {xn}) has zero probability")]
    ZeroProbabilityClamp { x1: usize, xn: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

/// Every failure the solver reports. Payloads are carried as `f64` so the
/// error type does not depend on the scalar parameter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlwError {
    #[error("|sin(pi nu)| = {0:e} is below the integer-order threshold")]
    NearIntegerNu(f64),
    #[error("x = {0} coincides with the singular point")]
    AtSingularity(f64),
    #[error("weighted integral grows under refinement: {values:?}")]
    NonIntegrable { values: Vec<f64> },
    #[error("series recursion denominator vanishes (j = {j}, k = {k})")]
    DegenerateRecursion { j: usize, k: usize },
    #[error("series tail {tail:e} above tolerance at |rho (x - a)| = {z}")]
    SeriesNotConverged { tail: f64, z: f64 },
    #[error("Volterra iteration failed to contract (ratio {ratio})")]
    IterationDiverged { ratio: f64 },
    #[error("|rho| = {0:e} too small for the Jost normalization")]
    NearZeroRho(f64),
    #[error("lambda = {re} + {im}i is numerically an eigenvalue (|Delta| = {delta:e})")]
    AtSpectrum { re: f64, im: f64, delta: f64 },
    #[error("Newton refinement for k = {k} left its box")]
    SeedDiverged { k: i64 },
    #[error("argument principle counts {counted} zeros but {found} were found in box {label}")]
    CountMismatch { label: String, counted: i64, found: usize },
    #[error("truncation s_max = {s_max} is below 4h = {four_h}")]
    BadTruncation { s_max: f64, four_h: f64 },
    #[error("main equation at x = {x} is numerically singular (rcond {rcond:e})")]
    SConditionFailed { x: f64, rcond: f64 },
    #[error("recovery routes differ by {discrepancy:e}, allowed {allowed:e}")]
    RouteDisagreement { discrepancy: f64, allowed: f64 },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("ODE integration failed: {0}")]
    Ode(String),
    #[error("linear solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, SlwError>;

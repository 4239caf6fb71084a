use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no positive equilibrium: p = {p} must exceed delta = {delta}")]
    NoPositiveEquilibrium { p: f64, delta: f64 },

    #[error("density must be nonnegative, got {0}")]
    NegativeDensity(f64),

    #[error("b'(v+) = {slope} is nonnegative: the wave is monotone for every delay")]
    AlwaysMonotone { slope: f64 },

    #[error("critical-point Newton iteration failed after {iterations} iterations (c = {c}, lambda = {lambda}, residual = {residual:e})")]
    NewtonDiverged {
        iterations: usize,
        c: f64,
        lambda: f64,
        residual: f64,
    },

    #[error("no real root pair: c = {c} does not exceed c* = {c_star}")]
    NoRootPair { c: f64, c_star: f64 },

    #[error("lambda = {lambda} lies outside the admissible window [{lower}, {upper}]")]
    LambdaOutsideWindow { lambda: f64, lower: f64, upper: f64 },

    #[error("domain too small for kernel: stencil needs {needed} points, grid has {available}")]
    DomainTooSmall { needed: usize, available: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("profile iteration did not converge after {iterations} iterations (last change {last_change:e}, residual {residual:e})")]
    ProfileNotConverged {
        iterations: usize,
        last_change: f64,
        residual: f64,
    },

    #[error("profile iteration diverged at iteration {iteration} (sup = {sup})")]
    ProfileDiverged { iteration: usize, sup: f64 },

    #[error("numerical blow-up at t = {time} (sup = {sup})")]
    BlowUp { time: f64, sup: f64 },

    #[error("far-field mismatch: {0}")]
    FarFieldMismatch(String),

    #[error("delayed exponential needs {terms} terms; horizon too long for the series form")]
    HorizonTooLong { terms: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("weight exponent mismatch between solvers: {first} vs {second}")]
    LambdaMismatch { first: f64, second: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, name: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: reason.into(),
        })
    }
}

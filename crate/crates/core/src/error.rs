use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// `offset` is the 1-based byte column of the offending token.
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("expression is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("field must be time-independent: {0}")]
    TimeDependent(String),

    #[error("field must be space-independent: {0}")]
    SpaceDependent(String),

    #[error("field is not periodic: {0}")]
    NotPeriodic(String),

    #[error("diffusion matrix is not uniformly elliptic (gamma = {gamma:e})")]
    NonElliptic { gamma: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular linear system (zero pivot in column {column})")]
    Singular { column: usize },

    #[error("{what} did not converge after {iterations} iterations (last change {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eigenfunction changed sign (min = {min:e}); discretization too coarse")]
    SignViolation { min: f64 },

    #[error("candidate function must be positive (min = {min:e})")]
    NonPositive { min: f64 },

    #[error("direct and adjoint eigenvalues differ: {direct} vs {adjoint}")]
    EigenMismatch { direct: f64, adjoint: f64 },

    #[error("principal multiplier is not positive: {0:e}")]
    NonPositiveMultiplier(f64),

    #[error("no spreading regime: k_0 = {k0} is not negative")]
    NoSpreading { k0: f64 },

    #[error("k_λ = {k} is not negative at s = {s}; the speed formula does not apply")]
    NonNegativeEigenvalue { s: f64, k: f64 },

    #[error("no bracket for the speed minimum in s in [{lo:e}, {hi:e}]")]
    BracketNotFound { lo: f64, hi: f64 },

    #[error("objective along the search ray is not unimodal: {0}")]
    NotUnimodal(String),

    #[error("coefficients do not have shear structure: {0}")]
    NotShear(String),

    #[error("mean growth rate must be positive, got {0}")]
    NonPositiveGrowth(f64),

    #[error("front reached the domain boundary at t = {t}")]
    FrontAtBoundary { t: f64 },

    #[error("solution left the invariant interval at t = {t} (u = {value})")]
    Instability { t: f64, value: f64 },

    #[error("level {level} is never crossed")]
    LevelNotCrossed { level: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

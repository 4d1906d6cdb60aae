//! # tii-core
//!
//! Numerical toolkit for transport, entropy and Fisher-information
//! inequalities of reversible Markov processes, on two computable model
//! classes: finite reversible chains and one-dimensional diffusions
//! discretized to birth-death chains.
//!
//! ## What lives where
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`space`] | finite metric spaces, probability measures, densities |
//! | [`transport`] | exact Wasserstein distances (LP and 1D quantile), Kantorovich duality, test-function pair families |
//! | [`chain`] | reversible generators, Dirichlet form, carré du champ, Fisher information, Poisson equation, spectral constants |
//! | [`rate`] | convex rate functions and their transform calculus (conjugate, generalized inverse, composition with log-Sobolev profiles) |
//! | [`verify`] | inequality checkers: deviation bounds, tilted-generator eigenvalues, best-constant estimation, Hopf-Lax machinery |
//! | [`diffusion`] | 1D diffusion models: scale/speed, stationary law, Lipschitz-Poisson constant, spectral-gap bounds, discretization |
//! | [`orlicz`] | Orlicz functions, gauge/Orlicz norms, Φ-Sobolev verification and the associated deviation bounds |
//! | [`simulate`] | exact OU / reflected-BM samplers, Euler fallback, empirical deviation estimates |
//! | [`report`] | serializable inequality reports, CSV emission |
//!
//! All public operations are pure functions of immutable inputs and are safe
//! to call concurrently.

use thiserror::Error;

pub mod chain;
pub mod diffusion;
pub mod linalg;
pub mod orlicz;
pub mod quad;
pub mod rate;
pub mod report;
pub mod simulate;
pub mod space;
pub mod transport;
pub mod verify;

pub use chain::{PoissonSolution, ReversibleChain};
pub use rate::RateFunction;
pub use report::{InequalityReport, ReportKind, Witness};
pub use space::{Density, FiniteMetricSpace, Measure};
pub use transport::TestFunctionPairFamily;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix sizes do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A metric-space axiom failed at construction.
    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    /// Weights are negative or do not sum to one.
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// A density is negative or not normalized against its reference measure.
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// Generator validation failed (rates, row sums, detailed balance).
    #[error("invalid generator: {0}")]
    InvalidChain(String),

    /// The chain is reducible but the operation needs ergodicity.
    #[error("chain is reducible; {0}")]
    Reducible(String),

    /// A dual pair violates its defining constraint.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// The min-cost transport solver failed its optimality certificate.
    #[error("transport solver internal error: {0}")]
    TransportInternal(String),

    /// Eigenvalue computation failed.
    #[error("eigensolver failure: {0}")]
    EigenFailure(String),

    /// Linear solve failed (singular system).
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// Exact evaluation was requested on a chain class that has none.
    #[error("exact evaluation unsupported: {0}")]
    UnsupportedExact(String),

    /// An invalid rate function (not convex/monotone, or empty domain).
    #[error("invalid rate function: {0}")]
    InvalidRateFunction(String),

    /// The speed measure does not normalize.
    #[error("speed measure diverges (D1 fails): {0}")]
    D1Divergent(String),

    /// The small-argument singularity of the time-change integral diverges.
    #[error("gamma integral diverges near zero: {0}")]
    GammaDivergent(String),

    /// Quadrature did not reach its target accuracy.
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    /// A test function is not Lipschitz within tolerance.
    #[error("function is not 1-Lipschitz: excess {0}")]
    NonLipschitz(f64),

    /// The source term of a Poisson equation is not centered.
    #[error("source not centered: mu(g) = {0}")]
    NonCenteredSource(f64),

    /// Gauge-norm integrand never drops below 1 (norm is infinite).
    #[error("Orlicz gauge norm did not converge: {0}")]
    GaugeNotConvergent(String),

    /// Required Orlicz integrability fails.
    #[error("integrability failed: {0}")]
    IntegrabilityFailed(String),

    /// Constants were not certified before use.
    #[error("constants not verified: {0}")]
    UnverifiedConstants(String),

    /// Parameter outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed serialized document.
    #[error("parse error: {0}")]
    Parse(String),
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Tolerance for exact linear-algebra identities (row sums, residuals).
pub const TOL_EXACT: f64 = 1e-12;
/// Tolerance for constraint checks (detailed balance, density normalization).
pub const TOL_CONSTRAINT: f64 = 1e-10;
/// Tolerance for inequality margins certified by the verifier.
pub const TOL_MARGIN: f64 = 1e-8;

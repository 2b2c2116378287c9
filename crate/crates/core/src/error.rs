use thiserror::Error;

/// Errors produced by the model, flow, Melnikov and orbit machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system definition: {0}")]
    InvalidSystem(String),

    #[error("the origin (0, 0) is a fold point; no zone is defined there")]
    FoldPoint,

    #[error("grazing impact at t = {t} (|y| = {y:.3e}) after {index} impacts")]
    GrazingImpact { t: f64, y: f64, index: usize },

    #[error("no crossing of x = 0 after {index} impacts (t = {t}): {reason}")]
    NoCrossing { t: f64, index: usize, reason: String },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance (estimate {estimate:.3e}, error {error:.3e})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("heteroclinic integral truncation could not meet the tail bound ({tail:.3e})")]
    Truncation { tail: f64 },

    #[error("residual unavailable: {0}")]
    ResidualUnavailable(Box<Error>),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian (determinant {determinant:.3e})")]
    SingularJacobian { determinant: f64 },

    #[error("no dissipative seed: ratio {ratio} is not below the threshold {rho}")]
    NoSeed { ratio: f64, rho: f64 },

    #[error("the Melnikov function vanishes identically; first-order analysis is inconclusive")]
    DegenerateMelnikov,

    #[error("no zero of the splitting distance on one period{}", if *.degenerate { " (identically zero)" } else { "" })]
    NoZero { degenerate: bool },

    #[error("operation not supported for this system: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use alloc::string::String;

/// Failures surfaced by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid construction parameters (basis sizes, priors, chain specs).
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Coincident evaluation points, which make the OU correlation singular.
    #[error("degenerate evaluation points: {0}")]
    Degenerate(String),
    /// Inconsistent dimensions between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A matrix that should be positive definite failed to factorize.
    #[error("factorization failed: {0}")]
    Factorization(String),
    /// A non-finite or otherwise unusable intermediate value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The ELBO dropped between two iterations by more than round-off.
    #[error("ELBO decreased at iteration {iteration}: {previous} -> {current}")]
    NonMonotone {
        iteration: usize,
        previous: f64,
        current: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

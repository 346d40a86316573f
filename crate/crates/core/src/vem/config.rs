use alloc::format;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ou::{W_MAX, W_MIN};

/// Error structure assumed within each curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Correlation {
    /// OU correlation with decay estimated in the M-step.
    #[default]
    OrnsteinUhlenbeck,
    /// Ψ = I; the M-step is skipped.
    Independent,
}

/// How the β precision treats the inclusion indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BetaPrecision {
    /// `E[G] Ψ⁻¹ E[G]'`: product of expectations. Not a coordinate
    /// maximizer, so the ELBO can decrease.
    ProductOfMeans,
    /// `E[G Ψ⁻¹ G']`, which adds `p(1 - p)` on the diagonal and makes the
    /// β step an exact coordinate maximizer of the ELBO.
    #[default]
    FullExpectation,
}

/// Prior hyperparameters and algorithm controls.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorConfig {
    /// `mu[(i, k)]`: prior inclusion mean for basis k on curve i, in (0, 1).
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix"))]
    pub mu: DMatrix<f64>,
    /// Inverse-gamma shape and scale of τ².
    pub lambda1: f64,
    pub lambda2: f64,
    /// Inverse-gamma shape and scale of σ².
    pub delta1: f64,
    pub delta2: f64,
    pub elbo_tol: f64,
    pub max_iter: usize,
    pub w_bounds: (f64, f64),
    pub w_init: f64,
    pub correlation: Correlation,
    pub beta_precision: BetaPrecision,
}

impl PriorConfig {
    /// Defaults for `m` curves and `k` basis functions: μ = 0.5, zero
    /// (improper) inverse-gamma hyperparameters, tolerance 0.01, 100 iterations.
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            mu: DMatrix::from_element(m, k, 0.5),
            lambda1: 0.0,
            lambda2: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            elbo_tol: 0.01,
            max_iter: 100,
            w_bounds: (W_MIN, W_MAX),
            w_init: 1.0,
            correlation: Correlation::OrnsteinUhlenbeck,
            beta_precision: BetaPrecision::FullExpectation,
        }
    }

    pub fn independent(mut self) -> Self {
        self.correlation = Correlation::Independent;
        self
    }

    pub fn validate(&self, m: usize, k: usize) -> Result<()> {
        if self.mu.nrows() != m || self.mu.ncols() != k {
            return Err(Error::Shape(format!(
                "mu is {}x{}, expected {m}x{k}",
                self.mu.nrows(),
                self.mu.ncols()
            )));
        }
        if let Some(v) = self.mu.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Config(format!(
                "prior inclusion mean {v} outside (0, 1)"
            )));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be a nonnegative real, got {v}"
                )));
            }
        }
        if !(self.elbo_tol > 0.0) {
            return Err(Error::Config("elbo_tol must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        let (lo, hi) = self.w_bounds;
        if !(lo >= W_MIN && hi <= W_MAX && lo <= hi) {
            return Err(Error::Config(format!(
                "w bounds [{lo}, {hi}] must lie within [{W_MIN}, {W_MAX}]"
            )));
        }
        if !(self.w_init > 0.0) || !self.w_init.is_finite() {
            return Err(Error::Config(format!(
                "w_init must be positive, got {}",
                self.w_init
            )));
        }
        Ok(())
    }

    /// σ² prior is a proper inverse gamma.
    pub fn sigma2_prior_proper(&self) -> bool {
        self.delta1 > 0.0 && self.delta2 > 0.0
    }

    /// τ² prior is a proper inverse gamma.
    pub fn tau2_prior_proper(&self) -> bool {
        self.lambda1 > 0.0 && self.lambda2 > 0.0
    }

    pub fn has_improper_prior(&self) -> bool {
        !(self.sigma2_prior_proper() && self.tau2_prior_proper())
    }
}

/// Starting values for the variational factors that Algorithm-style
/// initialization requires before the first sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitSpec {
    /// Prior guess of the noise variance; the initial q(σ²) mean is set to
    /// it. `None` uses the regression-spline mean squared error.
    pub sigma2_guess: Option<f64>,
    /// Initial scale λ*₂ of q(τ²).
    pub tau2_scale: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            sigma2_guess: None,
            tau2_scale: 100.0,
        }
    }
}

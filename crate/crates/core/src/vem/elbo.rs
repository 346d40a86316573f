//! Evidence lower bound for the spike-and-slab model under mean-field q.

use alloc::format;

use crate::error::{Error, Result};
use crate::special::{ln_gamma, xlogx};

use super::config::PriorConfig;
use super::model::CurveGram;
use super::state::{Moments, VariationalState};
use super::updates::expected_quadratic;
#[allow(unused_imports)]
use num_traits::Float;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The six additive pieces of the ELBO.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ElboTerms {
    /// E log p(Z | θ) - E log q(Z).
    pub inclusion: f64,
    /// E log p(β | σ², τ²) - E log q(β).
    pub coefficients: f64,
    /// E log p(θ) - E log q(θ).
    pub inclusion_prior: f64,
    /// E log p(σ²) - E log q(σ²).
    pub noise_variance: f64,
    /// E log p(τ²) - E log q(τ²).
    pub slab_scale: f64,
    /// E log p(Y | Z, β, σ²; w).
    pub likelihood: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.inclusion
            + self.coefficients
            + self.inclusion_prior
            + self.noise_variance
            + self.slab_scale
            + self.likelihood
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("inclusion", self.inclusion),
            ("coefficients", self.coefficients),
            ("inclusion prior", self.inclusion_prior),
            ("noise variance", self.noise_variance),
            ("slab scale", self.slab_scale),
            ("likelihood", self.likelihood),
        ] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("ELBO term `{name}` is {v}")));
            }
        }
        Ok(())
    }
}

/// KL-style contribution of an inverse-gamma factor q = IG(shape*, scale*)
/// against the prior IG(shape, scale). Improper priors drop their normalizer.
fn inverse_gamma_term(
    shape: f64,
    scale: f64,
    q_shape: f64,
    q_scale: f64,
    e_log: f64,
    e_inv: f64,
    proper: bool,
) -> f64 {
    let prior_norm = if proper {
        shape * scale.ln() - ln_gamma(shape)
    } else {
        0.0
    };
    prior_norm - q_shape * q_scale.ln()
        + ln_gamma(q_shape)
        + (q_shape - shape) * e_log
        + (q_scale - scale) * e_inv
}

/// Likelihood term of one curve given its expected quadratic.
fn curve_likelihood(gram: &CurveGram, quad: f64, e_log_sigma2: f64, e_inv_sigma2: f64) -> f64 {
    -0.5 * gram.n as f64 * (LN_2PI + e_log_sigma2) - 0.5 * gram.logdet - 0.5 * e_inv_sigma2 * quad
}

/// Sum over curves of the w-dependent likelihood term.
pub fn likelihood_term(state: &VariationalState, grams: &[CurveGram]) -> Result<f64> {
    let moments_log = super::state::ig_log_mean(state.sigma2_shape, state.sigma2_scale);
    let e_inv = state.e_inv_sigma2();
    let mut total = 0.0;
    for (i, gram) in grams.iter().enumerate() {
        let quad = expected_quadratic(
            gram,
            &state.p_row(i),
            &state.beta_mean[i],
            &state.beta_cov[i],
            None,
        )?;
        total += curve_likelihood(gram, quad, moments_log, e_inv);
    }
    Ok(total)
}

/// All ELBO terms for the current state, with Ψ summarized by `grams`.
pub fn compute_elbo(
    state: &VariationalState,
    grams: &[CurveGram],
    priors: &PriorConfig,
) -> Result<ElboTerms> {
    let (m, k) = state.p.shape();
    if grams.len() != m || state.beta_mean.len() != m || state.beta_cov.len() != m {
        return Err(Error::Shape(format!(
            "state and grams disagree on the number of curves ({m})"
        )));
    }
    let mo = Moments::from_state(state);
    let mut terms = ElboTerms::default();

    for i in 0..m {
        for j in 0..k {
            let p = state.p[(i, j)];
            let (lt, l1) = (mo.e_log_theta[(i, j)], mo.e_log_one_minus_theta[(i, j)]);
            terms.inclusion += p * lt + (1.0 - p) * l1 - xlogx(p) - xlogx(1.0 - p);

            let mu = priors.mu[(i, j)];
            let (a1, a2) = (state.a1[(i, j)], state.a2[(i, j)]);
            terms.inclusion_prior +=
                (mu - a1) * lt + (1.0 - mu - a2) * l1 - ln_gamma(mu) - ln_gamma(1.0 - mu)
                    + ln_gamma(a1)
                    + ln_gamma(a2)
                    - ln_gamma(a1 + a2);
        }
    }

    let kf = k as f64;
    for i in 0..m {
        let cov = &state.beta_cov[i];
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("Σ_β of curve {i} is not positive definite")))?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        terms.coefficients +=
            -0.5 * kf * (mo.e_log_sigma2 + mo.e_log_tau2) + 0.5 * logdet + 0.5 * kf
                - 0.5 * mo.e_inv_sigma2 * mo.e_inv_tau2 * state.e_beta_norm_sq(i);

        let quad = expected_quadratic(&grams[i], &state.p_row(i), &state.beta_mean[i], cov, None)?;
        terms.likelihood += curve_likelihood(&grams[i], quad, mo.e_log_sigma2, mo.e_inv_sigma2);
    }

    terms.noise_variance = inverse_gamma_term(
        priors.delta1,
        priors.delta2,
        state.sigma2_shape,
        state.sigma2_scale,
        mo.e_log_sigma2,
        mo.e_inv_sigma2,
        priors.sigma2_prior_proper(),
    );
    terms.slab_scale = inverse_gamma_term(
        priors.lambda1,
        priors.lambda2,
        state.tau2_shape,
        state.tau2_scale,
        mo.e_log_tau2,
        mo.e_inv_tau2,
        priors.tau2_prior_proper(),
    );
    terms.check()?;
    Ok(terms)
}

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSystem;
use crate::curves::CurveSet;
use crate::error::{Error, Result};

use super::config::{Correlation, InitSpec, PriorConfig};
use super::elbo::{compute_elbo, ElboTerms};
use super::model::{CurveGram, Model};
use super::mstep::optimize_w;
use super::state::{beta_log_moments, VariationalState};
use super::updates::{
    expected_quadratic, update_beta, update_sigma2, update_tau2, update_theta, update_z,
};

/// Allowed ELBO decrease between iterations, relative to max(1, |ELBO|).
pub const MONOTONE_SLACK: f64 = 1e-6;

/// Rounding error of the ELBO inherited from E[quad] = y'Ψ⁻¹y - ..., which
/// cancels catastrophically when the fit is near-exact. Negligible unless
/// E[quad] is many orders of magnitude below y'Ψ⁻¹y.
pub fn roundoff_floor(state: &VariationalState, grams: &[CurveGram]) -> Result<f64> {
    let mut yqy = 0.0;
    let mut quad = 0.0;
    let mut n = 0;
    for (i, g) in grams.iter().enumerate() {
        yqy += g.yqy.abs();
        quad += expected_quadratic(
            g,
            &state.p_row(i),
            &state.beta_mean[i],
            &state.beta_cov[i],
            None,
        )?;
        n += g.n;
    }
    Ok(n as f64 * f64::EPSILON * yqy / quad.max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub state: VariationalState,
    pub iterations: usize,
    pub converged: bool,
    pub elbo: ElboTerms,
    /// Mean of q(σ²) at initialization.
    pub sigma2_init: f64,
}

/// Mean squared residual of per-curve least-squares fits on the full basis.
pub fn regression_spline_mse(model: &Model) -> Result<f64> {
    let mut sse = 0.0;
    for d in &model.designs {
        let svd = d.basis.clone().svd(true, true);
        let coef = svd
            .solve(&d.y, 1e-12)
            .map_err(|e| Error::Numeric(format!("least-squares fit failed: {e}")))?;
        sse += (&d.y - &d.basis * coef).norm_squared();
    }
    Ok(sse / model.total_observations() as f64)
}

/// State before the first sweep: all bases included, q(σ²) centred on the
/// noise guess, q(τ²) scale and w taken from the init spec and priors.
pub fn initial_state(
    model: &Model,
    priors: &PriorConfig,
    init: &InitSpec,
) -> Result<(VariationalState, f64)> {
    let (m, k) = (model.curves(), model.basis_count());
    priors.validate(m, k)?;
    let guess = match init.sigma2_guess {
        Some(g) => g,
        None => regression_spline_mse(model)?,
    };
    if !(guess > 0.0) || !guess.is_finite() {
        return Err(Error::Config(format!(
            "noise-variance guess must be positive, got {guess}"
        )));
    }
    if !(init.tau2_scale > 0.0) || !init.tau2_scale.is_finite() {
        return Err(Error::Config("initial τ² scale must be positive".into()));
    }
    let sigma2_shape =
        (model.total_observations() as f64 + (m * k) as f64 + 2.0 * priors.delta1) / 2.0;
    let tau2_shape = ((m * k) as f64 + 2.0 * priors.lambda1) / 2.0;
    let a1 = priors.mu.map(|mu| 1.0 + mu);
    let a2 = priors.mu.map(|mu| 1.0 - mu);
    let state = VariationalState {
        p: DMatrix::from_element(m, k, 1.0),
        a1,
        a2,
        beta_mean: (0..m).map(|_| DVector::zeros(k)).collect(),
        beta_cov: (0..m).map(|_| DMatrix::identity(k, k)).collect(),
        sigma2_shape,
        sigma2_scale: guess * (sigma2_shape - 1.0),
        tau2_shape,
        tau2_scale: init.tau2_scale,
        w: priors.w_init.clamp(priors.w_bounds.0, priors.w_bounds.1),
        elbo_trace: Vec::new(),
    };
    Ok((state, guess))
}

/// One E-step sweep in the fixed order: β per curve, σ², τ², then θ and Z
/// for each (curve, basis).
pub fn e_step(
    model: &Model,
    state: &mut VariationalState,
    grams: &[CurveGram],
    priors: &PriorConfig,
) -> Result<()> {
    let (m, k) = (model.curves(), model.basis_count());
    let (e_sig, e_tau) = (state.e_inv_sigma2(), state.e_inv_tau2());
    for (i, gram) in grams.iter().enumerate() {
        let (mean, cov) = update_beta(gram, &state.p_row(i), e_sig, e_tau, priors.beta_precision)?;
        state.beta_mean[i] = mean;
        state.beta_cov[i] = cov;
    }
    let (shape, scale) = update_sigma2(state, grams, priors)?;
    state.sigma2_shape = shape;
    state.sigma2_scale = scale;
    let (shape, scale) = update_tau2(state, priors);
    state.tau2_shape = shape;
    state.tau2_scale = scale;

    let e_sig = state.e_inv_sigma2();
    for i in 0..m {
        let mut p = state.p_row(i);
        for j in 0..k {
            let (a1, a2) = update_theta(p[j], priors.mu[(i, j)]);
            state.a1[(i, j)] = a1;
            state.a2[(i, j)] = a2;
            let (lt, l1) = beta_log_moments(a1, a2);
            p[j] = update_z(
                &grams[i],
                &p,
                j,
                &state.beta_mean[i],
                &state.beta_cov[i],
                e_sig,
                lt,
                l1,
            );
            state.p[(i, j)] = p[j];
        }
    }
    Ok(())
}

/// Variational EM on a prepared model.
pub fn fit_model(model: &Model, priors: &PriorConfig, init: &InitSpec) -> Result<FitResult> {
    let (mut state, sigma2_init) = initial_state(model, priors, init)?;
    let mut grams = model.grams(priors.correlation, state.w)?;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_terms = ElboTerms::default();

    for iter in 1..=priors.max_iter {
        iterations = iter;
        e_step(model, &mut state, &grams, priors)?;
        if priors.correlation == Correlation::OrnsteinUhlenbeck {
            let search = optimize_w(model, &state, priors)?;
            if search.w != state.w {
                state.w = search.w;
                grams = model.grams(priors.correlation, state.w)?;
            }
        }
        last_terms = compute_elbo(&state, &grams, priors)?;
        let elbo = last_terms.total();
        let previous = state.elbo_trace.last().copied();
        state.elbo_trace.push(elbo);
        if let Some(prev) = previous {
            let slack = (MONOTONE_SLACK * elbo.abs().max(1.0)).max(roundoff_floor(&state, &grams)?);
            if elbo < prev - slack {
                return Err(Error::NonMonotone {
                    iteration: iter,
                    previous: prev,
                    current: elbo,
                });
            }
            if elbo - prev < priors.elbo_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(FitResult {
        state,
        iterations,
        converged,
        elbo: last_terms,
        sigma2_init,
    })
}

/// Build the model from data and basis, then run [`fit_model`].
pub fn fit(
    data: &CurveSet,
    basis: &BasisSystem,
    priors: &PriorConfig,
    init: &InitSpec,
) -> Result<(Model, FitResult)> {
    let model = Model::new(data, basis)?;
    let result = fit_model(&model, priors, init)?;
    Ok((model, result))
}

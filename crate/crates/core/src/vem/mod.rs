//! Variational EM for spike-and-slab basis selection with OU-correlated errors.
//!
//! The E-step runs coordinate ascent over q(β_i), q(σ²), q(τ²), q(θ_ki) and
//! q(Z_ki) with w fixed; the M-step maximizes the ELBO over w by a bounded
//! quasi-Newton search on log w.

mod config;
mod elbo;
mod fit;
mod model;
mod mstep;
mod state;
mod updates;

pub use config::{BetaPrecision, Correlation, InitSpec, PriorConfig};
pub use elbo::{compute_elbo, likelihood_term, ElboTerms};
pub use fit::{
    e_step, fit, fit_model, initial_state, regression_spline_mse, roundoff_floor, FitResult,
    MONOTONE_SLACK,
};
pub use model::{CurveDesign, CurveGram, Model};
pub use mstep::{decay_objective, maximize_log_scale, optimize_w, DecaySearch};
pub use state::{beta_log_moments, ig_log_mean, Moments, VariationalState};
pub use updates::{
    expected_quadratic, update_beta, update_sigma2, update_tau2, update_theta, update_z,
    z_log_odds, P_CLAMP,
};

//! Spike-and-slab basis selection for functional data with
//! Ornstein–Uhlenbeck within-curve correlation, fitted by variational EM,
//! plus a Gibbs sampler for the independence model.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod basis;
pub mod curves;
pub mod error;
pub mod estimators;
pub mod gibbs;
pub mod ou;
pub mod rng;
pub mod scenario;
#[cfg(feature = "serde")]
mod serde_la;
pub mod special;
pub mod vem;

pub use basis::{
    eval_basis, make_bspline_basis, make_fourier_basis, BasisKind, BasisMatrix, BasisSystem,
    Interval,
};
pub use curves::{Curve, CurveSet};
pub use error::{Error, Result};
pub use estimators::{
    adjusted_r2, coefficient_estimates, credible_band, fit_report, mean_curve, Band, BandOptions,
    Bands, CoefficientEstimates, FitReport,
};
pub use gibbs::{
    gelman_rubin, gibbs_run, map_estimate, ChainInit, ChainOutput, ChainSpec, Frozen, ZInit,
};
pub use ou::OuKernel;
pub use scenario::{generate_scenario, ScenarioId, ScenarioSpec};
pub use vem::{
    fit, fit_model, BetaPrecision, Correlation, FitResult, InitSpec, Model, PriorConfig,
    VariationalState,
};

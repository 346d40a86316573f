//! Replicate studies over synthetic scenarios.

use std::time::Instant;

use fdaselect_core::rng::{derive_seed, TAG_BAND};
use fdaselect_core::vem::Model;
use fdaselect_core::{
    fit_model, fit_report, generate_scenario, BandOptions, Correlation, CurveSet, FitReport,
    InitSpec, PriorConfig, ScenarioSpec,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pool::with_pool;

/// Where the initial q(σ²) mean comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseGuess {
    /// The generating σ² of the scenario.
    Truth,
    /// Mean squared error of a least-squares fit on the full basis.
    RegressionMse,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub correlation: Correlation,
    pub w_init: f64,
    pub tau2_scale: f64,
    pub noise_guess: NoiseGuess,
    pub elbo_tol: f64,
    pub max_iter: usize,
    pub band_level: f64,
    pub band_draws: usize,
}

impl Default for FitOptions {
    /// Simulation protocol: q(σ²) centred on the generating variance,
    /// λ*₂ = 100, w starting at 6, tolerance 0.01 and at most 100 sweeps.
    fn default() -> Self {
        Self {
            correlation: Correlation::OrnsteinUhlenbeck,
            w_init: 6.0,
            tau2_scale: 100.0,
            noise_guess: NoiseGuess::Truth,
            elbo_tol: 0.01,
            max_iter: 100,
            band_level: 0.95,
            band_draws: 200,
        }
    }
}

impl FitOptions {
    pub fn independent(mut self) -> Self {
        self.correlation = Correlation::Independent;
        self
    }

    pub fn priors(&self, m: usize, k: usize) -> PriorConfig {
        let mut p = PriorConfig::new(m, k);
        p.correlation = self.correlation;
        p.w_init = self.w_init;
        p.elbo_tol = self.elbo_tol;
        p.max_iter = self.max_iter;
        p
    }

    pub fn init(&self, spec: &ScenarioSpec) -> InitSpec {
        let sigma2_guess = match self.noise_guess {
            NoiseGuess::Truth => Some(spec.sigma * spec.sigma),
            NoiseGuess::RegressionMse => None,
            NoiseGuess::Fixed(v) => Some(v),
        };
        InitSpec {
            sigma2_guess,
            tau2_scale: self.tau2_scale,
        }
    }
}

/// Result of fitting one replicate dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub seed: u64,
    /// Cross-curve average ξ̂_k.
    pub xi_bar: Vec<f64>,
    pub w_hat: Option<f64>,
    pub sigma2_hat: f64,
    /// Mean width of the averaged band over the grid.
    pub band_width: f64,
    /// Fraction of grid points where the true mean lies in the averaged band.
    pub coverage: f64,
    /// (excluded, total) over (curve, k) pairs with a zero true coefficient.
    pub zero_excluded: (usize, usize),
    /// (included, total) over pairs with a nonzero true coefficient.
    pub nonzero_included: (usize, usize),
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario: String,
    pub sigma: f64,
    pub w_true: Option<f64>,
    pub correlation: Correlation,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failures: Vec<Failure>,
    /// Mean over replicates of ξ̂_k.
    pub coef_mean: Vec<f64>,
    /// Sample standard deviation over replicates of ξ̂_k.
    pub coef_sd: Vec<f64>,
    pub w_mean: Option<f64>,
    pub sigma2_mean: f64,
    pub band_width_mean: f64,
    pub coverage_mean: f64,
    pub zero_excluded_rate: Option<f64>,
    pub nonzero_included_rate: Option<f64>,
    pub iterations_mean: f64,
    pub converged_fraction: f64,
    pub fit_seconds_mean: f64,
    pub fit_seconds_total: f64,
    pub outcomes: Vec<ReplicateOutcome>,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn rate(pairs: impl Iterator<Item = (usize, usize)>) -> Option<f64> {
    let (hit, total) = pairs.fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (total > 0).then(|| hit as f64 / total as f64)
}

pub fn summarize(
    spec: &ScenarioSpec,
    correlation: Correlation,
    requested: usize,
    mut outcomes: Vec<ReplicateOutcome>,
    mut failures: Vec<Failure>,
) -> StudySummary {
    outcomes.sort_by_key(|o| o.replicate);
    failures.sort_by_key(|f| f.replicate);
    let k = spec.basis.count();
    let used = outcomes.len();
    let (coef_mean, coef_sd) = (0..k)
        .map(|j| {
            if used == 0 {
                (f64::NAN, f64::NAN)
            } else {
                mean_sd(outcomes.iter().map(move |o| o.xi_bar[j]))
            }
        })
        .unzip();
    let avg = |f: &dyn Fn(&ReplicateOutcome) -> f64| -> f64 {
        outcomes.iter().map(f).sum::<f64>() / used as f64
    };
    let w_mean = (correlation == Correlation::OrnsteinUhlenbeck && used > 0)
        .then(|| avg(&|o| o.w_hat.unwrap_or(f64::NAN)));
    StudySummary {
        scenario: spec.label(),
        sigma: spec.sigma,
        w_true: spec.w_true,
        correlation,
        replicates_requested: requested,
        replicates_used: used,
        failures,
        coef_mean,
        coef_sd,
        w_mean,
        sigma2_mean: avg(&|o| o.sigma2_hat),
        band_width_mean: avg(&|o| o.band_width),
        coverage_mean: avg(&|o| o.coverage),
        zero_excluded_rate: rate(outcomes.iter().map(|o| o.zero_excluded)),
        nonzero_included_rate: rate(outcomes.iter().map(|o| o.nonzero_included)),
        iterations_mean: avg(&|o| o.iterations as f64),
        converged_fraction: avg(&|o| if o.converged { 1.0 } else { 0.0 }),
        fit_seconds_mean: avg(&|o| o.seconds),
        fit_seconds_total: outcomes.iter().map(|o| o.seconds).sum(),
        outcomes,
    }
}

/// Fit one dataset and reduce the report to the study statistics.
pub fn fit_dataset(
    spec: &ScenarioSpec,
    data: &CurveSet,
    opts: &FitOptions,
    replicate: u64,
) -> Result<(ReplicateOutcome, FitReport)> {
    let (m, k) = (data.len(), spec.basis.count());
    let priors = opts.priors(m, k);
    let start = Instant::now();
    let model = Model::new(data, &spec.basis)?;
    let fit = fit_model(&model, &priors, &opts.init(spec))?;
    let seconds = start.elapsed().as_secs_f64();
    let band = BandOptions {
        level: opts.band_level,
        draws: opts.band_draws,
        seed: derive_seed(spec.seed, &[TAG_BAND]),
    };
    let mut report = fit_report(&model, &fit, &priors, &band)?;
    report.wall_time = Some(seconds);

    let grid = &data.curves[0].t;
    let truth = spec.true_mean(grid)?;
    let avg_band = match &report.bands.averaged {
        Some(b) => b.clone(),
        None => report.bands.per_curve[0].clone(),
    };
    let coverage = truth
        .iter()
        .enumerate()
        .filter(|(j, v)| avg_band.contains(*j, **v))
        .count() as f64
        / grid.len() as f64;

    let mut zero = (0, 0);
    let mut nonzero = (0, 0);
    if let Some(true_xi) = spec.true_coefficients() {
        for i in 0..m {
            for (j, xi) in true_xi.iter().enumerate() {
                let included = fit.state.p[(i, j)] >= 0.5;
                if *xi == 0.0 {
                    zero.1 += 1;
                    zero.0 += usize::from(!included);
                } else {
                    nonzero.1 += 1;
                    nonzero.0 += usize::from(included);
                }
            }
        }
    }
    let outcome = ReplicateOutcome {
        replicate,
        seed: spec.seed,
        xi_bar: report.coefficients.xi_bar.clone(),
        w_hat: report.w_hat,
        sigma2_hat: report.sigma2_hat,
        band_width: avg_band.mean_width(),
        coverage,
        zero_excluded: zero,
        nonzero_included: nonzero,
        iterations: report.iterations,
        converged: report.converged,
        seconds,
    };
    Ok((outcome, report))
}

fn collect(results: Vec<(u64, Result<ReplicateOutcome>)>) -> (Vec<ReplicateOutcome>, Vec<Failure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (r, res) in results {
        match res {
            Ok(o) => ok.push(o),
            Err(e) => failed.push(Failure {
                replicate: r,
                message: e.to_string(),
            }),
        }
    }
    (ok, failed)
}

/// Fit `replicates` datasets drawn from `spec` with per-replicate seeds
/// derived from `spec.seed`. Failed fits are recorded and excluded.
pub fn run_replicates(
    spec: &ScenarioSpec,
    replicates: usize,
    opts: &FitOptions,
) -> Result<StudySummary> {
    spec.validate()?;
    let results: Vec<(u64, Result<ReplicateOutcome>)> = with_pool(|| {
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| {
                let rs = spec.replicate(r);
                let res = generate_scenario(&rs)
                    .map_err(Into::into)
                    .and_then(|data| fit_dataset(&rs, &data, opts, r).map(|x| x.0));
                (r, res)
            })
            .collect()
    });
    let (ok, failed) = collect(results);
    Ok(summarize(spec, opts.correlation, replicates, ok, failed))
}

/// Correlated and independence fits of the same datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecificationSummary {
    pub correlated: StudySummary,
    pub independent: StudySummary,
}

pub fn misspecification_study(
    spec: &ScenarioSpec,
    replicates: usize,
    opts: &FitOptions,
) -> Result<MisspecificationSummary> {
    spec.validate()?;
    let indep_opts = opts.clone().independent();
    let corr_opts = FitOptions {
        correlation: Correlation::OrnsteinUhlenbeck,
        ..opts.clone()
    };
    type Pair = (u64, Result<ReplicateOutcome>, Result<ReplicateOutcome>);
    let results: Vec<Pair> = with_pool(|| {
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| {
                let rs = spec.replicate(r);
                match generate_scenario(&rs) {
                    Ok(data) => (
                        r,
                        fit_dataset(&rs, &data, &corr_opts, r).map(|x| x.0),
                        fit_dataset(&rs, &data, &indep_opts, r).map(|x| x.0),
                    ),
                    Err(e) => {
                        let msg = e.to_string();
                        (
                            r,
                            Err(e.into()),
                            Err(fdaselect_core::Error::Config(msg).into()),
                        )
                    }
                }
            })
            .collect()
    });
    let (corr, indep): (Vec<_>, Vec<_>) = results
        .into_iter()
        .map(|(r, a, b)| ((r, a), (r, b)))
        .unzip();
    let (c_ok, c_fail) = collect(corr);
    let (i_ok, i_fail) = collect(indep);
    Ok(MisspecificationSummary {
        correlated: summarize(
            spec,
            Correlation::OrnsteinUhlenbeck,
            replicates,
            c_ok,
            c_fail,
        ),
        independent: summarize(spec, Correlation::Independent, replicates, i_ok, i_fail),
    })
}

/// Replicate ξ̂ matrix, one row per replicate, for boxplot-style exports.
pub fn coefficient_matrix(summary: &StudySummary) -> DMatrix<f64> {
    let k = summary.coef_mean.len();
    DMatrix::from_fn(summary.outcomes.len(), k, |r, j| {
        summary.outcomes[r].xi_bar[j]
    })
}

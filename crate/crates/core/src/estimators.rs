//! Point estimates, mean curves, credible bands and fit statistics from a
//! fitted variational state.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{eval_basis, BasisSystem};
use crate::error::{Error, Result};
use crate::rng::{substream, TAG_BAND};
use crate::vem::{Correlation, FitResult, Model, PriorConfig, VariationalState};
#[allow(unused_imports)]
use num_traits::Float;

/// ξ̂_ki = μ_β_ki · Ẑ_ki with Ẑ the mode of q(Z_ki) (ties include).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoefficientEstimates {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix"))]
    pub xi_hat: DMatrix<f64>,
    /// Cross-curve average of ξ̂_ki for each k.
    pub xi_bar: Vec<f64>,
    /// Zero-based indices with Ẑ_ki = 1, per curve.
    pub selected: Vec<Vec<usize>>,
}

pub fn inclusion_mode(p: f64) -> bool {
    p >= 0.5
}

pub fn coefficient_estimates(state: &VariationalState) -> CoefficientEstimates {
    let (m, k) = state.p.shape();
    let mut xi_hat = DMatrix::zeros(m, k);
    let mut selected = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..k {
            if inclusion_mode(state.p[(i, j)]) {
                xi_hat[(i, j)] = state.beta_mean[i][j];
                selected[i].push(j);
            }
        }
    }
    let xi_bar = (0..k).map(|j| xi_hat.column(j).sum() / m as f64).collect();
    CoefficientEstimates {
        xi_hat,
        xi_bar,
        selected,
    }
}

/// ĝ_i(t) = Σ_k ξ̂_ki B_k(t) at each curve's points.
pub fn mean_curve(
    state: &VariationalState,
    basis: &BasisSystem,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if points.len() != state.curves() {
        return Err(Error::Shape(format!(
            "{} point sets for {} curves",
            points.len(),
            state.curves()
        )));
    }
    let est = coefficient_estimates(state);
    points
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            let b = eval_basis(basis, pts)?.values;
            let xi = est.xi_hat.row(i).transpose();
            Ok((b * xi).iter().copied().collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Band {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    pub fn mean_width(&self) -> f64 {
        let n = self.lower.len().max(1) as f64;
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .sum::<f64>()
            / n
    }

    pub fn contains(&self, j: usize, v: f64) -> bool {
        self.lower[j] <= v && v <= self.upper[j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandOptions {
    pub level: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            draws: 200,
            seed: 0,
        }
    }
}

/// Per-curve pointwise bands and, on a shared grid, their pointwise average.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bands {
    pub per_curve: Vec<Band>,
    pub averaged: Option<Band>,
}

/// One-based order-statistic ranks of the lower and upper band limits:
/// `⌈q · draws⌉` and its mirror `draws + 1 - ⌈q · draws⌉`, q = (1 - level)/2.
pub fn band_ranks(draws: usize, level: f64) -> Result<(usize, usize)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "band level must lie in (0, 1), got {level}"
        )));
    }
    if draws < 2 {
        return Err(Error::Domain(
            "credible bands need at least two draws".into(),
        ));
    }
    let q = (1.0 - level) / 2.0;
    let lo = ((q * draws as f64 - 1e-9).ceil() as usize).max(1);
    Ok((lo, draws + 1 - lo))
}

/// Sample Z_i ~ Bernoulli(p_i) and β_i ~ MVN(μ_i, Σ_i), form B (Z ∘ β) and
/// take pointwise order statistics. Draw `d` of curve `i` uses its own
/// substream, so results are independent of evaluation order.
pub fn credible_band(
    state: &VariationalState,
    basis: &BasisSystem,
    points: &[Vec<f64>],
    opts: &BandOptions,
) -> Result<Bands> {
    if points.len() != state.curves() {
        return Err(Error::Shape(format!(
            "{} point sets for {} curves",
            points.len(),
            state.curves()
        )));
    }
    let (lo_rank, hi_rank) = band_ranks(opts.draws, opts.level)?;
    let k = state.basis_count();
    let mut per_curve = Vec::with_capacity(points.len());
    for (i, pts) in points.iter().enumerate() {
        let b = eval_basis(basis, pts)?.values;
        let chol = state.beta_cov[i]
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("Σ_β of curve {i} is not positive definite")))?;
        let l = chol.l();
        let n = pts.len();
        // samples[j][d]
        let mut samples = vec![vec![0.0; opts.draws]; n];
        let mut z = DVector::zeros(k);
        for d in 0..opts.draws {
            let mut rng = substream(opts.seed, &[TAG_BAND, i as u64, d as u64]);
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let beta = &state.beta_mean[i] + &l * &z;
            let xi = DVector::from_fn(k, |j, _| {
                let include = rng.random::<f64>() < state.p[(i, j)];
                if include {
                    beta[j]
                } else {
                    0.0
                }
            });
            let curve = &b * xi;
            for j in 0..n {
                samples[j][d] = curve[j];
            }
        }
        let mut band = Band {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for (j, col) in samples.iter_mut().enumerate() {
            col.sort_by(f64::total_cmp);
            band.lower[j] = col[lo_rank - 1];
            band.upper[j] = col[hi_rank - 1];
        }
        per_curve.push(band);
    }
    let shared = points.windows(2).all(|w| w[0] == w[1]);
    let averaged = shared.then(|| {
        let n = points[0].len();
        let m = per_curve.len() as f64;
        let mut avg = Band {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for band in &per_curve {
            for j in 0..n {
                avg.lower[j] += band.lower[j] / m;
                avg.upper[j] += band.upper[j] / m;
            }
        }
        avg
    });
    Ok(Bands {
        per_curve,
        averaged,
    })
}

/// 1 - (1 - R²)(n - 1)/(n - p - 1).
pub fn adjusted_r2(y: &[f64], fitted: &[f64], p_effective: usize) -> Result<f64> {
    let n = y.len();
    if fitted.len() != n {
        return Err(Error::Shape(format!(
            "{n} observations but {} fitted values",
            fitted.len()
        )));
    }
    if n < p_effective + 2 {
        return Err(Error::Domain(format!(
            "adjusted R² needs more than {} observations, got {n}",
            p_effective + 1
        )));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(Error::Domain(
            "adjusted R² is undefined for constant data".into(),
        ));
    }
    let r2 = 1.0 - sse / sst;
    Ok(1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p_effective - 1) as f64)
}

/// Everything reported about one fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitReport {
    pub coefficients: CoefficientEstimates,
    pub mean_curves: Vec<Vec<f64>>,
    pub bands: Bands,
    /// Estimated decay; `None` for independence fits.
    pub w_hat: Option<f64>,
    /// Posterior mean of σ², δ*₂/(δ*₁ - 1).
    pub sigma2_hat: f64,
    /// Per-curve adjusted R² with p = number of selected bases of that curve.
    pub adjusted_r2: Vec<Option<f64>>,
    pub elbo_final: f64,
    pub iterations: usize,
    pub converged: bool,
    pub improper_prior: bool,
    /// Wall time in seconds when measured by the caller.
    pub wall_time: Option<f64>,
}

pub fn fit_report(
    model: &Model,
    fit: &FitResult,
    priors: &PriorConfig,
    band: &BandOptions,
) -> Result<FitReport> {
    let state = &fit.state;
    let coefficients = coefficient_estimates(state);
    let points: Vec<Vec<f64>> = model.designs.iter().map(|d| d.t.clone()).collect();
    let mean_curves: Vec<Vec<f64>> = model
        .designs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            (&d.basis * coefficients.xi_hat.row(i).transpose())
                .iter()
                .copied()
                .collect()
        })
        .collect();
    let bands = credible_band(state, &model.basis, &points, band)?;
    let adjusted = model
        .designs
        .iter()
        .zip(&mean_curves)
        .zip(&coefficients.selected)
        .map(|((d, fitted), sel)| adjusted_r2(d.y.as_slice(), fitted, sel.len()).ok())
        .collect();
    Ok(FitReport {
        coefficients,
        mean_curves,
        bands,
        w_hat: (priors.correlation == Correlation::OrnsteinUhlenbeck).then_some(state.w),
        sigma2_hat: state.sigma2_mean(),
        adjusted_r2: adjusted,
        elbo_final: state.elbo_trace.last().copied().unwrap_or(f64::NAN),
        iterations: fit.iterations,
        converged: fit.converged,
        improper_prior: priors.has_improper_prior(),
        wall_time: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_bspline_basis, Interval};

    fn state_with(p: &[f64], mean: &[f64]) -> VariationalState {
        let k = p.len();
        VariationalState {
            p: DMatrix::from_row_slice(1, k, p),
            a1: DMatrix::from_element(1, k, 1.0),
            a2: DMatrix::from_element(1, k, 1.0),
            beta_mean: vec![DVector::from_column_slice(mean)],
            beta_cov: vec![DMatrix::identity(k, k) * 1e-30],
            sigma2_shape: 10.0,
            sigma2_scale: 1.0,
            tau2_shape: 2.0,
            tau2_scale: 1.0,
            w: 1.0,
            elbo_trace: vec![],
        }
    }

    #[test]
    fn inclusion_threshold() {
        let s = state_with(&[0.9, 0.1, 0.5], &[-2.0, 7.3, 1.0]);
        let e = coefficient_estimates(&s);
        assert_eq!(e.xi_hat[(0, 0)], -2.0);
        assert_eq!(e.xi_hat[(0, 1)], 0.0);
        assert_eq!(e.xi_hat[(0, 2)], 1.0);
        assert_eq!(e.selected, vec![vec![0, 2]]);
    }

    #[test]
    fn cross_curve_average() {
        let mut s = state_with(&[1.0], &[1.0]);
        s.p = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        s.beta_mean.push(DVector::from_element(1, 4.0));
        s.beta_cov.push(DMatrix::identity(1, 1));
        let e = coefficient_estimates(&s);
        assert_eq!(e.xi_bar, vec![0.5]);
    }

    #[test]
    fn ranks_for_two_hundred_draws() {
        assert_eq!(band_ranks(200, 0.95).unwrap(), (5, 196));
        assert!(band_ranks(1, 0.95).is_err());
        assert!(band_ranks(200, 1.0).is_err());
    }

    #[test]
    fn degenerate_q_collapses_band() {
        let basis = make_bspline_basis(4, 3, Interval::new(0.0, 1.0).unwrap()).unwrap();
        let s = state_with(&[1.0, 0.0, 1.0, 1.0 - 1e-300], &[1.0, 5.0, -2.0, 0.5]);
        let pts = vec![Interval::new(0.0, 1.0).unwrap().linspace(11)];
        let bands = credible_band(&s, &basis, &pts, &BandOptions::default()).unwrap();
        let fitted = mean_curve(&s, &basis, &pts).unwrap();
        for j in 0..11 {
            assert!((bands.per_curve[0].lower[j] - fitted[0][j]).abs() < 1e-12);
            assert!((bands.per_curve[0].upper[j] - fitted[0][j]).abs() < 1e-12);
        }
        assert!(bands.averaged.is_some());
    }

    #[test]
    fn one_hot_coefficients_reproduce_basis_column() {
        let basis = make_bspline_basis(5, 3, Interval::new(0.0, 1.0).unwrap()).unwrap();
        let s = state_with(&[0.0, 0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let pts = vec![Interval::new(0.0, 1.0).unwrap().linspace(7)];
        let fitted = mean_curve(&s, &basis, &pts).unwrap();
        let b = eval_basis(&basis, &pts[0]).unwrap().values;
        for j in 0..7 {
            assert_eq!(fitted[0][j], b[(j, 2)]);
        }
        let zero = state_with(&[0.0; 5], &[1.0; 5]);
        assert!(mean_curve(&zero, &basis, &pts).unwrap()[0]
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn adjusted_r2_edge_cases() {
        let y = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(adjusted_r2(&y, &y, 1).unwrap(), 1.0);
        let mean = [2.5; 4];
        assert!(adjusted_r2(&y, &mean, 0).unwrap().abs() < 1e-15);
        assert!(adjusted_r2(&y, &y, 3).is_err());
    }
}

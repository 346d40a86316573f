//! Coordinate updates of the mean-field factors for fixed Ψ.

use alloc::format;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::special::logistic;

use super::config::{BetaPrecision, PriorConfig};
use super::model::CurveGram;
use super::state::VariationalState;

/// Lower clamp of every inclusion probability; the upper clamp is `1 - P_CLAMP`.
pub const P_CLAMP: f64 = 1e-12;

fn check_dims(gram: &CurveGram, p: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    let k = gram.basis_count();
    if p.len() != k || mean.len() != k || cov.nrows() != k || cov.ncols() != k {
        return Err(Error::Shape(format!(
            "basis has {k} functions; got p of length {}, mean of length {}, cov {}x{}",
            p.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(())
}

/// E[(y - g)'Ψ⁻¹(y - g)] under q(Z)q(β) for one curve, where `g = B (Z ∘ β)`.
///
/// With `pin = Some((k, r))` the indicator Z_k is held at the constant `r`
/// instead of following q(Z_k); this is the quadratic appearing in the
/// update of q(Z_k).
///
/// Using E[Z_k Z_l] = p_k p_l (k ≠ l), E[Z_k²] = p_k and M = Σ + μμ':
/// `y'Ψ⁻¹y - 2 c'(p ∘ μ) + Σ_{k≠l} A_kl p_k p_l M_kl + Σ_k A_kk p_k M_kk`,
/// which equals the mean residual form plus tr(Ψ⁻¹ Var(G'β)).
pub fn expected_quadratic(
    gram: &CurveGram,
    p: &[f64],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    pin: Option<(usize, f64)>,
) -> Result<f64> {
    check_dims(gram, p, mean, cov)?;
    let k = p.len();
    let prob = |j: usize| match pin {
        Some((pk, r)) if pk == j => r,
        _ => p[j],
    };
    let mut total = gram.yqy;
    for j in 0..k {
        let pj = prob(j);
        total -= 2.0 * gram.c[j] * pj * mean[j];
        let second = cov[(j, j)] + mean[j] * mean[j];
        total += gram.a[(j, j)] * pj * second;
        for l in (j + 1)..k {
            let second = cov[(j, l)] + mean[j] * mean[l];
            total += 2.0 * gram.a[(j, l)] * pj * prob(l) * second;
        }
    }
    Ok(total)
}

/// New (μ_β, Σ_β) for one curve.
///
/// Σ = [E(1/σ²)(E(1/τ²) I + D A D)]⁻¹ with D = diag(p) (or A ∘ E[ZZ'] under
/// [`BetaPrecision::FullExpectation`]), μ = E(1/σ²) Σ (p ∘ c).
pub fn update_beta(
    gram: &CurveGram,
    p: &[f64],
    e_inv_sigma2: f64,
    e_inv_tau2: f64,
    rule: BetaPrecision,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = gram.basis_count();
    if p.len() != k {
        return Err(Error::Shape(format!(
            "p has length {}, basis has {k}",
            p.len()
        )));
    }
    let mut precision = DMatrix::from_fn(k, k, |j, l| {
        let weight = if j == l {
            match rule {
                BetaPrecision::ProductOfMeans => p[j] * p[j],
                BetaPrecision::FullExpectation => p[j],
            }
        } else {
            p[j] * p[l]
        };
        e_inv_sigma2 * gram.a[(j, l)] * weight
    });
    for j in 0..k {
        precision[(j, j)] += e_inv_sigma2 * e_inv_tau2;
    }
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Numeric("β precision matrix is not positive definite".into()))?;
    let mut cov = chol.inverse();
    cov = (&cov + cov.transpose()) * 0.5;
    let weighted = DVector::from_fn(k, |j, _| e_inv_sigma2 * p[j] * gram.c[j]);
    let mean = &cov * weighted;
    Ok((mean, cov))
}

/// New (δ*₁, δ*₂) of q(σ²).
pub fn update_sigma2(
    state: &VariationalState,
    grams: &[CurveGram],
    priors: &PriorConfig,
) -> Result<(f64, f64)> {
    let m = state.curves();
    if grams.len() != m {
        return Err(Error::Shape(format!(
            "{} grams for {m} curves",
            grams.len()
        )));
    }
    let k = state.basis_count() as f64;
    let n_total: usize = grams.iter().map(|g| g.n).sum();
    let shape = (n_total as f64 + m as f64 * k + 2.0 * priors.delta1) / 2.0;
    let mut quad = 0.0;
    let mut beta_sq = 0.0;
    for (i, gram) in grams.iter().enumerate() {
        quad += expected_quadratic(
            gram,
            &state.p_row(i),
            &state.beta_mean[i],
            &state.beta_cov[i],
            None,
        )?;
        beta_sq += state.e_beta_norm_sq(i);
    }
    let scale = 0.5 * (quad + state.e_inv_tau2() * beta_sq + 2.0 * priors.delta2);
    Ok((shape, scale))
}

/// New (λ*₁, λ*₂) of q(τ²).
pub fn update_tau2(state: &VariationalState, priors: &PriorConfig) -> (f64, f64) {
    let m = state.curves() as f64;
    let k = state.basis_count() as f64;
    let shape = (m * k + 2.0 * priors.lambda1) / 2.0;
    let beta_sq: f64 = (0..state.curves()).map(|i| state.e_beta_norm_sq(i)).sum();
    let scale = 0.5 * (state.e_inv_sigma2() * beta_sq + 2.0 * priors.lambda2);
    (shape, scale)
}

/// New Beta parameters of q(θ_ki); they always sum to 2.
pub fn update_theta(p: f64, mu: f64) -> (f64, f64) {
    (p + mu, 2.0 - p - mu)
}

/// α_ki1 - α_ki0 for the inclusion indicator Z_k of one curve.
///
/// Terms common to both cases (including -(n/2) E log σ²) cancel; what
/// remains is -½ E(1/σ²) (Δ quadratic) + E log θ - E log(1 - θ) with
/// Δ quadratic = A_kk M_kk - 2 c_k μ_k + 2 Σ_{l≠k} A_kl p_l M_kl.
#[allow(clippy::too_many_arguments)]
pub fn z_log_odds(
    gram: &CurveGram,
    p: &[f64],
    k: usize,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    e_inv_sigma2: f64,
    e_log_theta: f64,
    e_log_one_minus_theta: f64,
) -> f64 {
    let kk = p.len();
    let mut delta = gram.a[(k, k)] * (cov[(k, k)] + mean[k] * mean[k]) - 2.0 * gram.c[k] * mean[k];
    for l in 0..kk {
        if l != k {
            delta += 2.0 * gram.a[(k, l)] * p[l] * (cov[(k, l)] + mean[k] * mean[l]);
        }
    }
    -0.5 * e_inv_sigma2 * delta + e_log_theta - e_log_one_minus_theta
}

/// New p*_ki: the logistic of [`z_log_odds`], clamped to `[ε, 1 - ε]`.
#[allow(clippy::too_many_arguments)]
pub fn update_z(
    gram: &CurveGram,
    p: &[f64],
    k: usize,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    e_inv_sigma2: f64,
    e_log_theta: f64,
    e_log_one_minus_theta: f64,
) -> f64 {
    let odds = z_log_odds(
        gram,
        p,
        k,
        mean,
        cov,
        e_inv_sigma2,
        e_log_theta,
        e_log_one_minus_theta,
    );
    logistic(odds).clamp(P_CLAMP, 1.0 - P_CLAMP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ou::OuKernel;

    fn scalar_gram(b: f64, y: f64) -> CurveGram {
        let k = OuKernel::independent(&[0.0]).unwrap();
        CurveGram::new(
            &DVector::from_element(1, y),
            &DMatrix::from_element(1, 1, b),
            &k,
        )
        .unwrap()
    }

    #[test]
    fn scalar_beta_update() {
        let g = scalar_gram(1.0, 3.0);
        let (mean, cov) = update_beta(&g, &[1.0], 2.0, 0.5, BetaPrecision::ProductOfMeans).unwrap();
        assert!((cov[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((mean[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn excluded_basis_gives_prior_update() {
        let g = scalar_gram(0.7, 3.0);
        let (mean, cov) = update_beta(&g, &[0.0], 2.0, 0.5, BetaPrecision::ProductOfMeans).unwrap();
        assert_eq!(mean[0], 0.0);
        assert!((cov[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn theta_parameters_sum_to_two() {
        assert_eq!(update_theta(1.0, 0.5), (1.5, 0.5));
        let (a, b) = update_theta(0.3, 0.9);
        assert!((a - 1.2).abs() < 1e-15 && (b - 0.8).abs() < 1e-15);
        assert_eq!(a + b, 2.0);
    }

    #[test]
    fn zero_inclusion_quadratic_is_yqy() {
        let g = scalar_gram(1.0, 3.0);
        let q = expected_quadratic(
            &g,
            &[0.0],
            &DVector::from_element(1, 5.0),
            &DMatrix::zeros(1, 1),
            None,
        )
        .unwrap();
        assert_eq!(q, 9.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = scalar_gram(1.0, 3.0);
        let r = expected_quadratic(
            &g,
            &[0.0, 1.0],
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
            None,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn symmetric_odds_give_half() {
        // contributes nothing to the fit and θ symmetric
        let g = scalar_gram(1.0, 3.0);
        let p = update_z(
            &g,
            &[1.0],
            0,
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
            1.0,
            -0.7,
            -0.7,
        );
        assert_eq!(p, 0.5);
        let p = update_z(
            &g,
            &[1.0],
            0,
            &DVector::zeros(1),
            &DMatrix::zeros(1, 1),
            1.0,
            800.0,
            0.0,
        );
        assert_eq!(p, 1.0 - P_CLAMP);
    }
}

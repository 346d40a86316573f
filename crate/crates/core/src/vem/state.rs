use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::special::digamma;

/// Parameters of every mean-field factor plus the current decay estimate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariationalState {
    /// `p[(i, k)]`: Bernoulli parameter of q(Z_ki). Rows are curves.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix"))]
    pub p: DMatrix<f64>,
    /// Beta parameters of q(θ_ki).
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix"))]
    pub a1: DMatrix<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix"))]
    pub a2: DMatrix<f64>,
    /// Mean and covariance of q(β_i), one per curve.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::vector_list"))]
    pub beta_mean: Vec<DVector<f64>>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix_list"))]
    pub beta_cov: Vec<DMatrix<f64>>,
    /// Inverse-gamma shape δ*₁ and scale δ*₂ of q(σ²).
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    /// Inverse-gamma shape λ*₁ and scale λ*₂ of q(τ²).
    pub tau2_shape: f64,
    pub tau2_scale: f64,
    pub w: f64,
    pub elbo_trace: Vec<f64>,
}

impl VariationalState {
    pub fn curves(&self) -> usize {
        self.p.nrows()
    }

    pub fn basis_count(&self) -> usize {
        self.p.ncols()
    }

    pub fn p_row(&self, i: usize) -> Vec<f64> {
        self.p.row(i).iter().copied().collect()
    }

    /// E(1/σ²) = δ*₁ / δ*₂.
    pub fn e_inv_sigma2(&self) -> f64 {
        self.sigma2_shape / self.sigma2_scale
    }

    /// E(1/τ²) = λ*₁ / λ*₂.
    pub fn e_inv_tau2(&self) -> f64 {
        self.tau2_shape / self.tau2_scale
    }

    /// Posterior mean of σ², δ*₂ / (δ*₁ - 1).
    pub fn sigma2_mean(&self) -> f64 {
        self.sigma2_scale / (self.sigma2_shape - 1.0)
    }

    /// E[β_i'β_i] = tr Σ_i + μ_i'μ_i.
    pub fn e_beta_norm_sq(&self, i: usize) -> f64 {
        self.beta_cov[i].trace() + self.beta_mean[i].norm_squared()
    }
}

/// Expectations under the current variational factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub e_z: DMatrix<f64>,
    pub e_log_theta: DMatrix<f64>,
    pub e_log_one_minus_theta: DMatrix<f64>,
    pub e_inv_sigma2: f64,
    pub e_log_sigma2: f64,
    pub e_inv_tau2: f64,
    pub e_log_tau2: f64,
    /// E[β_ki²] = Σ_i[k, k] + μ_ki².
    pub e_beta_sq: DMatrix<f64>,
}

impl Moments {
    pub fn from_state(state: &VariationalState) -> Self {
        let (m, k) = state.p.shape();
        let mut e_log_theta = DMatrix::zeros(m, k);
        let mut e_log_one_minus_theta = DMatrix::zeros(m, k);
        let mut e_beta_sq = DMatrix::zeros(m, k);
        for i in 0..m {
            for j in 0..k {
                let (lt, l1) = beta_log_moments(state.a1[(i, j)], state.a2[(i, j)]);
                e_log_theta[(i, j)] = lt;
                e_log_one_minus_theta[(i, j)] = l1;
                if let (Some(mean), Some(cov)) = (state.beta_mean.get(i), state.beta_cov.get(i)) {
                    e_beta_sq[(i, j)] = cov[(j, j)] + mean[j] * mean[j];
                }
            }
        }
        Self {
            e_z: state.p.clone(),
            e_log_theta,
            e_log_one_minus_theta,
            e_inv_sigma2: state.e_inv_sigma2(),
            e_log_sigma2: ig_log_mean(state.sigma2_shape, state.sigma2_scale),
            e_inv_tau2: state.e_inv_tau2(),
            e_log_tau2: ig_log_mean(state.tau2_shape, state.tau2_scale),
            e_beta_sq,
        }
    }
}

/// (E log θ, E log(1 - θ)) for θ ~ Beta(a1, a2).
pub fn beta_log_moments(a1: f64, a2: f64) -> (f64, f64) {
    let total = digamma(a1 + a2);
    (digamma(a1) - total, digamma(a2) - total)
}

/// E log X for X ~ IG(shape, scale): log scale - ψ(shape).
pub fn ig_log_mean(shape: f64, scale: f64) -> f64 {
    libm::log(scale) - digamma(shape)
}

//! Ornstein–Uhlenbeck correlation `Ψ(t, s) = exp(-w |t - s|)`.
//!
//! Over sorted distinct points the process is first-order Markov, so Ψ⁻¹ is
//! tridiagonal and both the quadratic forms and log det Ψ cost O(n). The
//! dense constructors here exist for cross-checking and for noise generation.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Smallest decay accepted anywhere; below it Ψ approaches the singular all-ones matrix.
pub const W_MIN: f64 = 1e-3;
/// Largest decay; at this value neighbouring correlations are numerically zero.
pub const W_MAX: f64 = 1e6;

/// Clamp a decay into `[W_MIN, W_MAX]`, rejecting nonpositive or NaN input.
pub fn clamp_decay(w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("OU decay must be positive, got {w}")));
    }
    Ok(w.clamp(W_MIN, W_MAX))
}

/// Immutable OU correlation over a fixed set of points.
#[derive(Debug, Clone)]
pub struct OuKernel {
    sorted: Vec<f64>,
    /// `order[j]` is the original index of the j-th smallest point; `None`
    /// when the input was already increasing.
    order: Option<Vec<usize>>,
    w: f64,
    /// `rho[j] = Ψ(t_j, t_{j+1})` over sorted neighbours.
    rho: Vec<f64>,
    /// `1 - rho[j]^2`, evaluated as `-expm1(-2 w Δ)` for accuracy when w Δ is small.
    innov: Vec<f64>,
}

impl OuKernel {
    pub fn new(points: &[f64], w: f64) -> Result<Self> {
        let w = clamp_decay(w)?;
        let (sorted, order) = sort_points(points)?;
        let mut rho = Vec::with_capacity(sorted.len().saturating_sub(1));
        let mut innov = Vec::with_capacity(rho.capacity());
        for pair in sorted.windows(2) {
            let gap = pair[1] - pair[0];
            rho.push((-w * gap).exp());
            innov.push(-(-2.0 * w * gap).exp_m1());
        }
        if innov.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Factorization(format!(
                "OU correlation with w = {w} is numerically singular on these points"
            )));
        }
        Ok(Self {
            sorted,
            order,
            w,
            rho,
            innov,
        })
    }

    /// Identity correlation (independent errors) over `points`.
    pub fn independent(points: &[f64]) -> Result<Self> {
        let (sorted, order) = sort_points(points)?;
        let gaps = sorted.len().saturating_sub(1);
        Ok(Self {
            sorted,
            order,
            w: f64::INFINITY,
            rho: alloc::vec![0.0; gaps],
            innov: alloc::vec![1.0; gaps],
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Decay parameter; infinite for the independent kernel.
    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn is_independent(&self) -> bool {
        self.w.is_infinite()
    }

    /// log det Ψ = Σ log(1 - ρ_j²).
    pub fn logdet(&self) -> f64 {
        self.innov.iter().map(|d| d.ln()).sum()
    }

    /// `out = Ψ⁻¹ x`, both in the caller's original point order.
    pub fn apply_inverse(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.len();
        if x.len() != n || out.len() != n {
            return Err(Error::Shape(format!(
                "kernel has {n} points, got vectors of length {} and {}",
                x.len(),
                out.len()
            )));
        }
        match &self.order {
            None => self.tridiagonal_apply(x, out),
            Some(order) => {
                let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
                let mut ys = alloc::vec![0.0; n];
                self.tridiagonal_apply(&xs, &mut ys);
                for (j, &i) in order.iter().enumerate() {
                    out[i] = ys[j];
                }
            }
        }
        Ok(())
    }

    fn tridiagonal_apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        if n == 0 {
            return;
        }
        if n == 1 {
            out[0] = x[0];
            return;
        }
        for j in 0..n {
            let mut acc = 0.0;
            if j > 0 {
                let (r, d) = (self.rho[j - 1], self.innov[j - 1]);
                acc += (x[j] - r * x[j - 1]) / d;
            } else {
                acc += x[0];
            }
            if j + 1 < n {
                let (r, d) = (self.rho[j], self.innov[j]);
                // ρ² / (1 - ρ²) x_j - ρ / (1 - ρ²) x_{j+1}
                acc += r * (r * x[j] - x[j + 1]) / d;
            }
            out[j] = acc;
        }
    }

    /// Ψ⁻¹ · rhs for an `n × p` right-hand side.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.len() {
            return Err(Error::Shape(format!(
                "kernel has {} points, rhs has {} rows",
                self.len(),
                rhs.nrows()
            )));
        }
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        let mut buf = alloc::vec![0.0; rhs.nrows()];
        for c in 0..rhs.ncols() {
            let col: Vec<f64> = rhs.column(c).iter().copied().collect();
            self.apply_inverse(&col, &mut buf)?;
            out.column_mut(c).copy_from_slice(&buf);
        }
        Ok(out)
    }

    /// Quadratic form `x' Ψ⁻¹ x` in original point order.
    pub fn inverse_quadratic(&self, x: &[f64]) -> Result<f64> {
        let mut buf = alloc::vec![0.0; x.len()];
        self.apply_inverse(x, &mut buf)?;
        Ok(x.iter().zip(&buf).map(|(a, b)| a * b).sum())
    }

    /// Dense Ψ⁻¹ assembled from the tridiagonal closed form (original order).
    pub fn precision_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        let mut e = alloc::vec![0.0; n];
        let mut col = alloc::vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            self.apply_inverse(&e, &mut col)
                .expect("square by construction");
            out.column_mut(c).copy_from_slice(&col);
        }
        out
    }
}

fn sort_points(points: &[f64]) -> Result<(Vec<f64>, Option<Vec<usize>>)> {
    if points.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("evaluation points must be finite".into()));
    }
    let increasing = points.windows(2).all(|p| p[0] < p[1]);
    let (sorted, order) = if increasing {
        (points.to_vec(), None)
    } else {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        (idx.iter().map(|&i| points[i]).collect(), Some(idx))
    };
    if let Some(pair) = sorted.windows(2).find(|p| p[0] == p[1]) {
        return Err(Error::Degenerate(format!(
            "duplicate evaluation point {}; jitter the points first",
            pair[0]
        )));
    }
    Ok((sorted, order))
}

/// Dense `Ψ` with entries `exp(-w |t_j - t_l|)`.
pub fn ou_corr_matrix(points: &[f64], w: f64) -> Result<DMatrix<f64>> {
    let w = clamp_decay(w)?;
    sort_points(points)?;
    let n = points.len();
    Ok(DMatrix::from_fn(n, n, |j, l| {
        if j == l {
            1.0
        } else {
            (-w * (points[j] - points[l]).abs()).exp()
        }
    }))
}

/// Ψ⁻¹ · rhs through a dense Cholesky factorization.
pub fn dense_solve(points: &[f64], w: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let psi = ou_corr_matrix(points, w)?;
    if rhs.nrows() != psi.nrows() {
        return Err(Error::Shape(
            "rhs rows must match the number of points".into(),
        ));
    }
    let chol = psi.cholesky().ok_or_else(|| {
        Error::Factorization("dense OU correlation is not positive definite".into())
    })?;
    Ok(chol.solve(rhs))
}

/// log det Ψ through a dense Cholesky factorization.
pub fn dense_logdet(points: &[f64], w: f64) -> Result<f64> {
    let psi = ou_corr_matrix(points, w)?;
    let chol = psi.cholesky().ok_or_else(|| {
        Error::Factorization("dense OU correlation is not positive definite".into())
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Lower Cholesky factor of Ψ, used to draw correlated noise.
pub fn ou_cholesky_factor(points: &[f64], w: f64) -> Result<DMatrix<f64>> {
    let psi = ou_corr_matrix(points, w)?;
    psi.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Factorization("dense OU correlation is not positive definite".into()))
}

/// `Ψ⁻¹ v` for a vector, convenience over [`OuKernel::apply_inverse`].
pub fn apply_inverse_vec(kernel: &OuKernel, v: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = alloc::vec![0.0; v.len()];
    kernel.apply_inverse(v.as_slice(), &mut out)?;
    Ok(DVector::from_vec(out))
}

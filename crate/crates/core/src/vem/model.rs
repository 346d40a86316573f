use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::basis::{eval_basis, BasisSystem};
use crate::curves::CurveSet;
use crate::error::{Error, Result};
use crate::ou::OuKernel;

use super::config::Correlation;

/// Observations of one curve together with its basis matrix.
#[derive(Debug, Clone)]
pub struct CurveDesign {
    pub t: Vec<f64>,
    pub y: DVector<f64>,
    /// `n × K`, entry (j, k) = B_k(t_j).
    pub basis: DMatrix<f64>,
}

/// Data and basis matrices for every curve, fixed for the whole fit.
#[derive(Debug, Clone)]
pub struct Model {
    pub designs: Vec<CurveDesign>,
    pub basis: BasisSystem,
}

impl Model {
    pub fn new(data: &CurveSet, basis: &BasisSystem) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Shape("no curves to fit".into()));
        }
        let designs = data
            .curves
            .iter()
            .map(|c| {
                Ok(CurveDesign {
                    t: c.t.clone(),
                    y: DVector::from_column_slice(&c.y),
                    basis: eval_basis(basis, &c.t)?.values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            designs,
            basis: basis.clone(),
        })
    }

    pub fn curves(&self) -> usize {
        self.designs.len()
    }

    pub fn basis_count(&self) -> usize {
        self.basis.count
    }

    pub fn total_observations(&self) -> usize {
        self.designs.iter().map(|d| d.t.len()).sum()
    }

    pub fn kernels(&self, correlation: Correlation, w: f64) -> Result<Vec<OuKernel>> {
        self.designs
            .iter()
            .map(|d| match correlation {
                Correlation::OrnsteinUhlenbeck => OuKernel::new(&d.t, w),
                Correlation::Independent => OuKernel::independent(&d.t),
            })
            .collect()
    }

    /// Per-curve sufficient statistics under the correlation with decay `w`.
    pub fn grams(&self, correlation: Correlation, w: f64) -> Result<Vec<CurveGram>> {
        self.designs
            .iter()
            .zip(self.kernels(correlation, w)?)
            .map(|(d, k)| CurveGram::new(&d.y, &d.basis, &k))
            .collect()
    }
}

/// Quadratic-form statistics of one curve for a fixed Ψ:
/// `a = B'Ψ⁻¹B`, `c = B'Ψ⁻¹y`, `yqy = y'Ψ⁻¹y`, `logdet = log|Ψ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGram {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub yqy: f64,
    pub logdet: f64,
    pub n: usize,
}

impl CurveGram {
    pub fn new(y: &DVector<f64>, basis: &DMatrix<f64>, kernel: &OuKernel) -> Result<Self> {
        let n = y.len();
        if basis.nrows() != n || kernel.len() != n {
            return Err(Error::Shape(format!(
                "curve has {n} values, basis has {} rows, kernel has {} points",
                basis.nrows(),
                kernel.len()
            )));
        }
        let qb = kernel.solve(basis)?;
        let mut qy = alloc::vec![0.0; n];
        kernel.apply_inverse(y.as_slice(), &mut qy)?;
        let qy = DVector::from_vec(qy);
        Ok(Self {
            a: basis.transpose() * &qb,
            c: qb.transpose() * y,
            yqy: y.dot(&qy),
            logdet: kernel.logdet(),
            n,
        })
    }

    pub fn basis_count(&self) -> usize {
        self.c.len()
    }
}

//! B-spline and Fourier basis systems and their evaluation matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Closed interval `[lo, hi]` of evaluation-point units.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || !(hi > lo) {
            return Err(Error::Config(format!("degenerate interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    /// `n` equally spaced points including both endpoints.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => {
                let step = self.len() / (n - 1) as f64;
                let mut pts: Vec<f64> = (0..n).map(|j| self.lo + step * j as f64).collect();
                pts[n - 1] = self.hi;
                pts
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BasisKind {
    /// Clamped B-splines of the given degree over `knots`.
    BSpline { degree: usize, knots: Vec<f64> },
    /// Unit-L2 Fourier functions ordered (1, sin ωt, cos ωt, sin 2ωt, ...).
    Fourier { period: f64 },
}

/// A family of `count` basis functions evaluable on `domain`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BasisSystem {
    pub kind: BasisKind,
    pub count: usize,
    pub domain: Interval,
}

/// `values[(j, k)] = B_k(points[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub points: Vec<f64>,
}

/// Clamped B-spline basis with `count - degree - 1` equally spaced interior knots.
pub fn make_bspline_basis(count: usize, degree: usize, domain: Interval) -> Result<BasisSystem> {
    if degree < 1 {
        return Err(Error::Config("B-spline degree must be at least 1".into()));
    }
    if count < degree + 1 {
        return Err(Error::Config(format!(
            "{count} basis functions are too few for degree {degree} (need at least {})",
            degree + 1
        )));
    }
    let domain = Interval::new(domain.lo, domain.hi)?;
    let interior = count - degree - 1;
    let mut knots = Vec::with_capacity(count + degree + 1);
    knots.extend(core::iter::repeat_n(domain.lo, degree + 1));
    for j in 1..=interior {
        knots.push(domain.lo + domain.len() * j as f64 / (interior + 1) as f64);
    }
    knots.extend(core::iter::repeat_n(domain.hi, degree + 1));
    Ok(BasisSystem {
        kind: BasisKind::BSpline { degree, knots },
        count,
        domain,
    })
}

/// Fourier basis over one period starting at zero.
pub fn make_fourier_basis(count: usize, period: f64) -> Result<BasisSystem> {
    if count < 1 {
        return Err(Error::Config(
            "Fourier basis needs at least one function".into(),
        ));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Config(format!(
            "Fourier period must be positive, got {period}"
        )));
    }
    Ok(BasisSystem {
        kind: BasisKind::Fourier { period },
        count,
        domain: Interval {
            lo: 0.0,
            hi: period,
        },
    })
}

impl BasisSystem {
    pub fn count(&self) -> usize {
        self.count
    }

    /// Values of all basis functions at one point, written into `out`.
    pub fn eval_point(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.count {
            return Err(Error::Shape(format!(
                "output row has length {}, basis has {} functions",
                out.len(),
                self.count
            )));
        }
        if !t.is_finite() {
            return Err(Error::Domain(format!("non-finite evaluation point {t}")));
        }
        match &self.kind {
            BasisKind::BSpline { degree, knots } => {
                let t = self.clamp_to_domain(t)?;
                out.iter_mut().for_each(|v| *v = 0.0);
                let span = find_span(knots, *degree, self.count, t);
                let mut local = vec![0.0; degree + 1];
                cox_de_boor(knots, *degree, span, t, &mut local);
                out[span - degree..=span].copy_from_slice(&local);
            }
            BasisKind::Fourier { period } => {
                let omega = 2.0 * PI / period;
                let amp = (2.0 / period).sqrt();
                out[0] = 1.0 / period.sqrt();
                for (k, v) in out.iter_mut().enumerate().skip(1) {
                    let harmonic = k.div_ceil(2) as f64;
                    let arg = harmonic * omega * t;
                    *v = if k % 2 == 1 {
                        amp * arg.sin()
                    } else {
                        amp * arg.cos()
                    };
                }
            }
        }
        Ok(())
    }

    fn clamp_to_domain(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.domain.len();
        if t < self.domain.lo - slack || t > self.domain.hi + slack {
            return Err(Error::Domain(format!(
                "point {t} outside basis domain [{}, {}]",
                self.domain.lo, self.domain.hi
            )));
        }
        Ok(t.max(self.domain.lo).min(self.domain.hi))
    }
}

/// Evaluate every basis function at every point.
pub fn eval_basis(basis: &BasisSystem, points: &[f64]) -> Result<BasisMatrix> {
    let k = basis.count;
    let mut values = DMatrix::zeros(points.len(), k);
    let mut row = vec![0.0; k];
    for (j, &t) in points.iter().enumerate() {
        basis.eval_point(t, &mut row)?;
        for (col, &v) in row.iter().enumerate() {
            values[(j, col)] = v;
        }
    }
    Ok(BasisMatrix {
        values,
        points: points.to_vec(),
    })
}

/// Index `s` with `knots[s] <= t < knots[s + 1]`, restricted to
/// `degree..count`; the right endpoint maps to the last nonempty span.
fn find_span(knots: &[f64], degree: usize, count: usize, t: f64) -> usize {
    if t >= knots[count] {
        return count - 1;
    }
    let (mut lo, mut hi) = (degree, count);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Triangular Cox–de Boor recursion: the `degree + 1` nonzero basis values
/// on `span`, i.e. B_{span-degree}, ..., B_span.
fn cox_de_boor(knots: &[f64], degree: usize, span: usize, t: f64, out: &mut [f64]) {
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

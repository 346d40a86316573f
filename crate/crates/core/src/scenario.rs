//! Synthetic scenarios: a shared mean curve plus OU-correlated Gaussian noise.

use alloc::format;
use alloc::string::String;

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{eval_basis, make_bspline_basis, make_fourier_basis, BasisSystem, Interval};
use crate::curves::{Curve, CurveSet};
use crate::error::{Error, Result};
use crate::ou::ou_cholesky_factor;
use crate::rng::{derive_seed, substream, TAG_NOISE, TAG_REPLICATE};
#[allow(unused_imports)]
use num_traits::Float;

/// True B-spline coefficients of Scenarios 1 and 2.
pub const BSPLINE_TRUTH: [f64; 10] = [-2.0, 0.0, 1.5, 1.5, 0.0, -1.0, -0.5, -1.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ScenarioId {
    One,
    Two,
    Three,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MeanFunction {
    /// Σ_k ξ_k B_k(t) on the scenario basis.
    Coefficients(Vec<f64>),
    /// cos t + sin 2t.
    CosPlusSin2,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    /// OU decay of the noise; `None` draws iid noise.
    pub w_true: Option<f64>,
    /// Basis used to evaluate the mean (coefficient form) and to fit.
    pub basis: BasisSystem,
    pub mean: MeanFunction,
    pub domain: Interval,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Cubic B-splines, K = 10 on [0, 1], five curves of 100 points, w = 6.
    pub fn bspline(sigma: f64, seed: u64) -> Self {
        let domain = Interval { lo: 0.0, hi: 1.0 };
        Self {
            id: ScenarioId::Custom,
            m: 5,
            n: 100,
            sigma,
            w_true: Some(6.0),
            basis: make_bspline_basis(10, 3, domain).expect("fixed basis is valid"),
            mean: MeanFunction::Coefficients(BSPLINE_TRUTH.to_vec()),
            domain,
            seed,
        }
    }

    pub fn scenario1(seed: u64) -> Self {
        Self {
            id: ScenarioId::One,
            ..Self::bspline(0.1, seed)
        }
    }

    pub fn scenario2(seed: u64) -> Self {
        Self {
            id: ScenarioId::Two,
            ..Self::bspline(0.2, seed)
        }
    }

    /// cos t + sin 2t on [0, 2π], ten Fourier bases, σ = 0.1, w = 6.
    pub fn scenario3(seed: u64) -> Self {
        let period = 2.0 * core::f64::consts::PI;
        Self {
            id: ScenarioId::Three,
            m: 5,
            n: 100,
            sigma: 0.1,
            w_true: Some(6.0),
            basis: make_fourier_basis(10, period).expect("fixed basis is valid"),
            mean: MeanFunction::CosPlusSin2,
            domain: Interval {
                lo: 0.0,
                hi: period,
            },
            seed,
        }
    }

    pub fn preset(id: u8, seed: u64) -> Result<Self> {
        match id {
            1 => Ok(Self::scenario1(seed)),
            2 => Ok(Self::scenario2(seed)),
            3 => Ok(Self::scenario3(seed)),
            _ => Err(Error::Config(format!("unknown scenario {id}"))),
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        if self.sigma != sigma {
            self.id = ScenarioId::Custom;
        }
        self.sigma = sigma;
        self
    }

    pub fn with_w(mut self, w: Option<f64>) -> Self {
        if self.w_true != w {
            self.id = ScenarioId::Custom;
        }
        self.w_true = w;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Spec for replicate `r` of a study with master seed `self.seed`.
    pub fn replicate(&self, r: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, &[TAG_REPLICATE, r]),
            ..self.clone()
        }
    }

    pub fn label(&self) -> String {
        match self.id {
            ScenarioId::One => "1".into(),
            ScenarioId::Two => "2".into(),
            ScenarioId::Three => "3".into(),
            ScenarioId::Custom => "custom".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if let Some(w) = self.w_true {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("w_true must be positive, got {w}")));
            }
        }
        if self.m == 0 {
            return Err(Error::Config("scenario needs at least one curve".into()));
        }
        if self.n < self.basis.count() {
            return Err(Error::Config(format!(
                "n = {} is below the basis count {}",
                self.n,
                self.basis.count()
            )));
        }
        if let MeanFunction::Coefficients(c) = &self.mean {
            if c.len() != self.basis.count() {
                return Err(Error::Config(format!(
                    "{} true coefficients for {} bases",
                    c.len(),
                    self.basis.count()
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        self.domain.linspace(self.n)
    }

    pub fn true_mean(&self, points: &[f64]) -> Result<Vec<f64>> {
        match &self.mean {
            MeanFunction::Coefficients(c) => {
                let b = eval_basis(&self.basis, points)?.values;
                Ok((b * DVector::from_column_slice(c))
                    .iter()
                    .copied()
                    .collect())
            }
            MeanFunction::CosPlusSin2 => {
                Ok(points.iter().map(|&t| t.cos() + (2.0 * t).sin()).collect())
            }
        }
    }

    /// True coefficients on the fitting basis when the mean is an exact
    /// expansion of it.
    pub fn true_coefficients(&self) -> Option<Vec<f64>> {
        match &self.mean {
            MeanFunction::Coefficients(c) => Some(c.clone()),
            MeanFunction::CosPlusSin2 => None,
        }
    }
}

/// Draw the curves of `spec`; curve i uses its own noise substream.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<CurveSet> {
    spec.validate()?;
    let t = spec.grid();
    let mean = spec.true_mean(&t)?;
    let factor = match spec.w_true {
        Some(w) => Some(ou_cholesky_factor(&t, w)?),
        None => None,
    };
    let n = t.len();
    let mut curves = Vec::with_capacity(spec.m);
    for i in 0..spec.m {
        let mut rng = substream(spec.seed, &[TAG_NOISE, i as u64]);
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = match &factor {
            Some(l) => l * z,
            None => z,
        };
        let y: Vec<f64> = (0..n).map(|j| mean[j] + spec.sigma * eps[j]).collect();
        curves.push(Curve::new(format!("{}", i + 1), t.clone(), y)?);
    }
    CurveSet::new(curves)
}

/// Noise-free curves of `spec`, for structural tests.
pub fn noiseless(spec: &ScenarioSpec) -> Result<CurveSet> {
    spec.validate()?;
    let t = spec.grid();
    let mean = spec.true_mean(&t)?;
    let curves = (0..spec.m)
        .map(|i| Curve::new(format!("{}", i + 1), t.clone(), mean.clone()))
        .collect::<Result<Vec<_>>>()?;
    CurveSet::new(curves)
}

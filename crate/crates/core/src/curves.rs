use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One observed curve: values `y[j]` at strictly increasing points `t[j]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Curve {
    pub id: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Curve {
    pub fn new(id: impl Into<String>, t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if t.len() != y.len() {
            return Err(Error::Shape(format!(
                "curve {id}: {} points but {} values",
                t.len(),
                y.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::Shape(format!(
                "curve {id}: need at least two observations"
            )));
        }
        if t.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("curve {id}: non-finite observation")));
        }
        if let Some(p) = t.windows(2).find(|p| p[0] >= p[1]) {
            return Err(Error::Degenerate(format!(
                "curve {id}: points must be strictly increasing ({} then {})",
                p[0], p[1]
            )));
        }
        Ok(Self { id, t, y })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `m` curves, possibly observed on different grids.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveSet {
    pub curves: Vec<Curve>,
}

impl CurveSet {
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Shape("curve set is empty".into()));
        }
        Ok(Self { curves })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn total_observations(&self) -> usize {
        self.curves.iter().map(Curve::len).sum()
    }

    /// True when every curve is observed at the same points.
    pub fn shared_grid(&self) -> bool {
        let first = &self.curves[0].t;
        self.curves.iter().all(|c| &c.t == first)
    }

    /// Smallest interval containing every evaluation point.
    pub fn span(&self) -> (f64, f64) {
        let lo = self
            .curves
            .iter()
            .map(|c| c.t[0])
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .curves
            .iter()
            .map(|c| c.t[c.len() - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

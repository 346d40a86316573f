//! Log-gamma and digamma for positive real arguments.
//!
//! Both use upward recurrence until the argument reaches [`ASYMPTOTIC_FROM`]
//! and then the Stirling/de Moivre asymptotic series, which keeps the absolute
//! error near machine precision on the whole positive axis.

#[allow(unused_imports)]
use num_traits::Float;

const ASYMPTOTIC_FROM: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function for `x > 0`. Returns NaN otherwise.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return if x == f64::INFINITY {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let mut z = x;
    let mut shift = 0.0;
    // ln Γ(x) = ln Γ(x + n) - ln(x (x+1) ... (x+n-1)); keep the product
    // bounded by folding it into the log every few steps.
    let mut prod = 1.0;
    while z < ASYMPTOTIC_FROM {
        prod *= z;
        z += 1.0;
        if prod > 1e280 {
            shift += prod.ln();
            prod = 1.0;
        }
    }
    shift += prod.ln();
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2k} / (2k (2k - 1)).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2
                                                * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))));
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + series - shift
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`. Returns NaN otherwise.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut z = x;
    let mut acc = 0.0;
    while z < ASYMPTOTIC_FROM {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // B_{2k} / (2k) coefficients.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    acc + z.ln() - 0.5 * inv - series
}

/// `x ln x` with the convention `0 ln 0 = 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Logistic function evaluated without overflow for large |x|.
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

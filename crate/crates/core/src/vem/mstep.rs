//! M-step: maximize the ELBO over the OU decay with q held fixed.

use alloc::format;

use crate::error::{Error, Result};

use super::config::PriorConfig;
use super::elbo::likelihood_term;
use super::model::Model;
use super::state::VariationalState;
#[allow(unused_imports)]
use num_traits::Float;

/// Result of a decay search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySearch {
    pub w: f64,
    /// Objective at `w`, up to terms that do not depend on it.
    pub objective: f64,
    pub entry_objective: f64,
    pub evaluations: usize,
}

const MAX_ITER: usize = 100;
const MAX_STEP: f64 = 3.0;
const MIN_IMPROVEMENT: f64 = 1e-10;

/// Bounded quasi-Newton ascent of `f(w)` in `u = ln w`.
///
/// Gradients are central differences with step `1e-5 · max(1, |u|)` in u
/// (one-sided at a bound); curvature is the secant of successive gradients.
/// Returns the entry point unless the best value found beats it by at least
/// `1e-10`, so the objective never decreases.
pub fn maximize_log_scale<F>(mut f: F, w_entry: f64, bounds: (f64, f64)) -> Result<DecaySearch>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (lo, hi) = (bounds.0.ln(), bounds.1.ln());
    let mut evaluations = 0usize;
    let mut eval = |u: f64, evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        f(u.exp())
    };
    let u0 = w_entry.ln().clamp(lo, hi);
    let f0 = eval(u0, &mut evaluations)?;
    if !f0.is_finite() {
        return Err(Error::Numeric(format!("ELBO is {f0} at w = {}", u0.exp())));
    }
    let (mut u, mut fu) = (u0, f0);
    let mut previous: Option<(f64, f64)> = None;
    let mut fallback_step: f64 = 0.5;

    for _ in 0..MAX_ITER {
        let h = 1e-5 * u.abs().max(1.0);
        let (ua, ub) = ((u - h).max(lo), (u + h).min(hi));
        if ub <= ua {
            break;
        }
        let fa = eval(ua, &mut evaluations)?;
        let fb = eval(ub, &mut evaluations)?;
        let g = (fb - fa) / (ub - ua);
        if !g.is_finite() || g.abs() <= 1e-12 * fu.abs().max(1.0) {
            break;
        }
        if (u <= lo && g < 0.0) || (u >= hi && g > 0.0) {
            break;
        }
        let curvature = previous.and_then(|(up, gp)| {
            let c = (g - gp) / (u - up);
            (c < 0.0 && c.is_finite()).then_some(c)
        });
        let mut step = match curvature {
            Some(c) => -g / c,
            None => g.signum() * fallback_step,
        };
        step = step.clamp(-MAX_STEP, MAX_STEP);

        let mut accepted = None;
        for _ in 0..50 {
            let trial = (u + step).clamp(lo, hi);
            if trial == u {
                break;
            }
            let ft = eval(trial, &mut evaluations)?;
            if ft.is_finite() && ft > fu {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((un, fnew)) = accepted else { break };
        previous = Some((u, g));
        if curvature.is_none() {
            fallback_step = (2.0 * (un - u).abs()).min(MAX_STEP);
        }
        let moved = (un - u).abs();
        u = un;
        fu = fnew;
        if moved < 1e-12 {
            break;
        }
    }

    if fu >= f0 + MIN_IMPROVEMENT {
        Ok(DecaySearch {
            w: u.exp(),
            objective: fu,
            entry_objective: f0,
            evaluations,
        })
    } else {
        Ok(DecaySearch {
            w: u0.exp(),
            objective: f0,
            entry_objective: f0,
            evaluations,
        })
    }
}

/// The w-dependent part of the ELBO for a fixed variational state.
pub fn decay_objective(
    model: &Model,
    state: &VariationalState,
    priors: &PriorConfig,
    w: f64,
) -> Result<f64> {
    let grams = model.grams(priors.correlation, w)?;
    likelihood_term(state, &grams)
}

/// Maximize the ELBO over w within `priors.w_bounds`, starting from `state.w`.
pub fn optimize_w(
    model: &Model,
    state: &VariationalState,
    priors: &PriorConfig,
) -> Result<DecaySearch> {
    maximize_log_scale(
        |w| decay_objective(model, state, priors, w),
        state.w,
        priors.w_bounds,
    )
}

//! Gibbs sampler for the independence-error model (Ψ = I), with
//! Gelman–Rubin diagnostics and kernel-density MAP summaries.
//!
//! One sweep draws β_i for every curve, then Z_ki for k = 1..K within each
//! curve (systematic scan), then θ, σ² and τ², all from their conjugate
//! full conditionals.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::{band_ranks, Band, Bands};
use crate::rng::{substream, StreamRng, TAG_CHAIN};
use crate::special::logistic;
use crate::vem::{Model, PriorConfig};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ZInit {
    AllOnes,
    /// Each Z_ki drawn Bernoulli(p) from the chain's stream.
    Bernoulli(f64),
}

/// Starting values; β and θ are filled with a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainInit {
    pub beta: f64,
    pub theta: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub z: ZInit,
}

impl ChainInit {
    pub fn first() -> Self {
        Self {
            beta: -1.0,
            theta: 0.2,
            sigma2: 1.0,
            tau2: 1.0,
            z: ZInit::AllOnes,
        }
    }

    pub fn second() -> Self {
        Self {
            beta: 1.0,
            theta: 0.8,
            sigma2: 5.0,
            tau2: 5.0,
            z: ZInit::Bernoulli(0.7),
        }
    }
}

/// Blocks held at fixed values instead of being sampled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frozen {
    pub z: Option<DMatrix<f64>>,
    pub theta: Option<DMatrix<f64>>,
    pub sigma2: Option<f64>,
    pub tau2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    /// One entry per chain.
    pub inits: Vec<ChainInit>,
    pub seed: u64,
    pub frozen: Frozen,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in_fraction: 0.5,
            thin: 50,
            inits: vec![ChainInit::first(), ChainInit::second()],
            seed: 0,
            frozen: Frozen::default(),
        }
    }
}

impl ChainSpec {
    pub fn chains(&self) -> usize {
        self.inits.len()
    }

    /// Iterations discarded before thinning starts.
    pub fn burn_in(&self) -> usize {
        self.iterations - self.post_burn_in()
    }

    fn post_burn_in(&self) -> usize {
        (self.iterations as f64 * (1.0 - self.burn_in_fraction)).floor() as usize
    }

    pub fn retained_per_chain(&self) -> usize {
        self.post_burn_in() / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.iterations < self.thin {
            return Err(Error::Config(format!(
                "need iterations ≥ thin ≥ 1, got {} and {}",
                self.iterations, self.thin
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!(
                "burn-in fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            )));
        }
        if self.inits.is_empty() {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.retained_per_chain() == 0 {
            return Err(Error::Config(
                "burn-in and thinning leave no retained samples".into(),
            ));
        }
        for init in &self.inits {
            if !(init.sigma2 > 0.0 && init.tau2 > 0.0) || !(init.theta > 0.0 && init.theta < 1.0) {
                return Err(Error::Config("chain initial values out of range".into()));
            }
            if let ZInit::Bernoulli(p) = init.z {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!(
                        "Z init probability {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Retained draws of one chain, `samples[param][draw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSamples {
    pub samples: Vec<Vec<f64>>,
}

/// Pooled output of all chains.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainOutput {
    pub names: Vec<String>,
    /// `chains[c][param][draw]`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub rhat: Vec<f64>,
    pub map: Vec<f64>,
    /// MAP of Z_ki β_ki, one row per curve.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_la::matrix"))]
    pub xi_hat: DMatrix<f64>,
    pub wall_time: Option<f64>,
}

impl ChainOutput {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c[param].iter().copied())
            .collect()
    }

    pub fn pooled_len(&self) -> usize {
        self.chains
            .iter()
            .map(|c| c.first().map_or(0, Vec::len))
            .sum()
    }
}

/// Parameter layout: β, Z, θ, ξ = Zβ (each curve-major), then σ², τ².
pub fn parameter_names(m: usize, k: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(4 * m * k + 2);
    for block in ["beta", "z", "theta", "xi"] {
        for i in 0..m {
            for j in 0..k {
                names.push(format!("{block}[{},{}]", i + 1, j + 1));
            }
        }
    }
    names.push("sigma2".into());
    names.push("tau2".into());
    names
}

fn inverse_gamma(rng: &mut StreamRng, shape: f64, scale: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::Numeric(format!("inverse-gamma({shape}, {scale}): {e}")))?;
    Ok(1.0 / g.sample(rng))
}

struct ChainState {
    beta: Vec<DVector<f64>>,
    z: DMatrix<f64>,
    theta: DMatrix<f64>,
    sigma2: f64,
    tau2: f64,
}

/// Run chain `c` of `spec` and return its retained draws.
pub fn run_chain(
    model: &Model,
    priors: &PriorConfig,
    spec: &ChainSpec,
    c: usize,
) -> Result<ChainSamples> {
    spec.validate()?;
    let (m, k) = (model.curves(), model.basis_count());
    priors.validate(m, k)?;
    let init = spec
        .inits
        .get(c)
        .ok_or_else(|| Error::Config(format!("chain {c} has no initial values")))?;
    let mut rng = substream(spec.seed, &[TAG_CHAIN, c as u64]);

    let btb: Vec<DMatrix<f64>> = model
        .designs
        .iter()
        .map(|d| d.basis.transpose() * &d.basis)
        .collect();
    let bty: Vec<DVector<f64>> = model
        .designs
        .iter()
        .map(|d| d.basis.transpose() * &d.y)
        .collect();
    let col_sq: Vec<Vec<f64>> = btb
        .iter()
        .map(|g| (0..k).map(|j| g[(j, j)]).collect())
        .collect();
    let big_n = model.total_observations() as f64;
    let mk = (m * k) as f64;

    let z0 = match init.z {
        ZInit::AllOnes => DMatrix::from_element(m, k, 1.0),
        ZInit::Bernoulli(p) => {
            DMatrix::from_fn(m, k, |_, _| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        }
    };
    let mut st = ChainState {
        beta: (0..m)
            .map(|_| DVector::from_element(k, init.beta))
            .collect(),
        z: spec.frozen.z.clone().unwrap_or(z0),
        theta: spec
            .frozen
            .theta
            .clone()
            .unwrap_or_else(|| DMatrix::from_element(m, k, init.theta)),
        sigma2: spec.frozen.sigma2.unwrap_or(init.sigma2),
        tau2: spec.frozen.tau2.unwrap_or(init.tau2),
    };
    if st.z.shape() != (m, k) || st.theta.shape() != (m, k) {
        return Err(Error::Shape("frozen Z or θ has the wrong shape".into()));
    }

    let n_params = 4 * m * k + 2;
    let keep = spec.retained_per_chain();
    let mut samples = vec![Vec::with_capacity(keep); n_params];
    let burn = spec.burn_in();

    for iter in 1..=spec.iterations {
        // β_i | Z, σ², τ², y ~ N(P⁻¹ D B'y, σ² P⁻¹), P = D B'B D + I / τ².
        for i in 0..m {
            let d = st.z.row(i).transpose();
            let mut prec = btb[i].component_mul(&(&d * d.transpose()));
            for j in 0..k {
                prec[(j, j)] += 1.0 / st.tau2;
            }
            let rhs = bty[i].component_mul(&d);
            let chol = prec.cholesky().ok_or_else(|| {
                Error::Numeric(format!("β precision of curve {i} is not positive definite"))
            })?;
            let mean = chol.solve(&rhs);
            let noise = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dev = chol
                .l()
                .transpose()
                .solve_upper_triangular(&noise)
                .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
            st.beta[i] = mean + dev * st.sigma2.sqrt();
        }

        // Z_ki | rest, sweeping k within each curve.
        if spec.frozen.z.is_none() {
            for i in 0..m {
                let design = &model.designs[i];
                let xi = st.beta[i].component_mul(&st.z.row(i).transpose());
                let mut resid = &design.y - &design.basis * xi;
                for j in 0..k {
                    let col = design.basis.column(j);
                    let bk = st.beta[i][j];
                    if st.z[(i, j)] != 0.0 {
                        resid.axpy(bk, &col, 1.0);
                    }
                    let cross = col.dot(&resid);
                    let th = st.theta[(i, j)];
                    let log_odds = th.ln()
                        - (1.0 - th).ln()
                        - (bk * bk * col_sq[i][j] - 2.0 * bk * cross) / (2.0 * st.sigma2);
                    let on = rng.random::<f64>() < logistic(log_odds);
                    st.z[(i, j)] = if on { 1.0 } else { 0.0 };
                    if on {
                        resid.axpy(-bk, &col, 1.0);
                    }
                }
            }
        }

        // θ_ki | Z_ki ~ Beta(μ + Z, 2 - μ - Z).
        if spec.frozen.theta.is_none() {
            for i in 0..m {
                for j in 0..k {
                    let (mu, z) = (priors.mu[(i, j)], st.z[(i, j)]);
                    let dist = Beta::new(mu + z, 2.0 - mu - z)
                        .map_err(|e| Error::Numeric(format!("θ conditional: {e}")))?;
                    st.theta[(i, j)] = dist
                        .sample(&mut rng)
                        .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                }
            }
        }

        let beta_sq: f64 = st.beta.iter().map(|b| b.norm_squared()).sum();
        if spec.frozen.sigma2.is_none() {
            let sse: f64 = model
                .designs
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    (&d.y - &d.basis * st.beta[i].component_mul(&st.z.row(i).transpose()))
                        .norm_squared()
                })
                .sum();
            let shape = priors.delta1 + (big_n + mk) / 2.0;
            let scale = priors.delta2 + 0.5 * (sse + beta_sq / st.tau2);
            st.sigma2 = inverse_gamma(&mut rng, shape, scale)?;
        }
        if spec.frozen.tau2.is_none() {
            let shape = priors.lambda1 + mk / 2.0;
            let scale = priors.lambda2 + beta_sq / (2.0 * st.sigma2);
            st.tau2 = inverse_gamma(&mut rng, shape, scale)?;
        }

        if iter > burn && (iter - burn).is_multiple_of(spec.thin) {
            let mut idx = 0;
            for block in 0..4 {
                for i in 0..m {
                    for j in 0..k {
                        let v = match block {
                            0 => st.beta[i][j],
                            1 => st.z[(i, j)],
                            2 => st.theta[(i, j)],
                            _ => st.beta[i][j] * st.z[(i, j)],
                        };
                        samples[idx].push(v);
                        idx += 1;
                    }
                }
            }
            samples[idx].push(st.sigma2);
            samples[idx + 1].push(st.tau2);
        }
    }
    Ok(ChainSamples { samples })
}

/// Combine per-chain draws into diagnostics and MAP summaries.
pub fn assemble(chains: Vec<ChainSamples>, m: usize, k: usize) -> Result<ChainOutput> {
    let names = parameter_names(m, k);
    if chains.is_empty() || chains.iter().any(|c| c.samples.len() != names.len()) {
        return Err(Error::Shape(
            "chain samples do not match the parameter layout".into(),
        ));
    }
    let chains: Vec<Vec<Vec<f64>>> = chains.into_iter().map(|c| c.samples).collect();
    let mut rhat = Vec::with_capacity(names.len());
    let mut map = Vec::with_capacity(names.len());
    for p in 0..names.len() {
        let per: Vec<&[f64]> = chains.iter().map(|c| c[p].as_slice()).collect();
        rhat.push(gelman_rubin(&per)?);
        let pooled: Vec<f64> = per.iter().flat_map(|c| c.iter().copied()).collect();
        map.push(map_estimate(&pooled)?);
    }
    let xi_offset = 3 * m * k;
    let xi_hat = DMatrix::from_fn(m, k, |i, j| map[xi_offset + i * k + j]);
    Ok(ChainOutput {
        names,
        chains,
        rhat,
        map,
        xi_hat,
        wall_time: None,
    })
}

/// Run every chain of `spec` in order and assemble the output.
pub fn gibbs_run(model: &Model, priors: &PriorConfig, spec: &ChainSpec) -> Result<ChainOutput> {
    let chains = (0..spec.chains())
        .map(|c| run_chain(model, priors, spec, c))
        .collect::<Result<Vec<_>>>()?;
    assemble(chains, model.curves(), model.basis_count())
}

/// Pointwise bands of B ξ over the pooled ξ = Zβ draws, using the same
/// order-statistic ranks as the variational bands.
pub fn pooled_band(model: &Model, output: &ChainOutput, level: f64) -> Result<Bands> {
    let (m, k) = (model.curves(), model.basis_count());
    let draws = output.pooled_len();
    let (lo_rank, hi_rank) = band_ranks(draws, level)?;
    let xi_offset = 3 * m * k;
    let mut per_curve = Vec::with_capacity(m);
    for (i, design) in model.designs.iter().enumerate() {
        let pooled: Vec<Vec<f64>> = (0..k)
            .map(|j| output.pooled(xi_offset + i * k + j))
            .collect();
        let n = design.t.len();
        let mut values = vec![Vec::with_capacity(draws); n];
        for d in 0..draws {
            let xi = DVector::from_fn(k, |j, _| pooled[j][d]);
            let curve = &design.basis * xi;
            for (j, col) in values.iter_mut().enumerate() {
                col.push(curve[j]);
            }
        }
        let mut band = Band {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for (j, col) in values.iter_mut().enumerate() {
            col.sort_by(f64::total_cmp);
            band.lower[j] = col[lo_rank - 1];
            band.upper[j] = col[hi_rank - 1];
        }
        per_curve.push(band);
    }
    let shared = model.designs.windows(2).all(|w| w[0].t == w[1].t);
    let averaged = shared.then(|| {
        let n = model.designs[0].t.len();
        let mut avg = Band {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for b in &per_curve {
            for j in 0..n {
                avg.lower[j] += b.lower[j] / m as f64;
                avg.upper[j] += b.upper[j] / m as f64;
            }
        }
        avg
    });
    Ok(Bands {
        per_curve,
        averaged,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Potential scale reduction `sqrt(1 + B / (n W))`, with `B / n` the
/// variance of the chain means and `W` the mean within-chain variance.
/// Constant chains give 1 when they agree and infinity otherwise.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Config("R̂ needs at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Shape(
            "R̂ needs equal-length chains of at least two draws".into(),
        ));
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, b_over_n) = mean_var(&means);
    let w = stats.iter().map(|s| s.1).sum::<f64>() / chains.len() as f64;
    if w == 0.0 {
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((1.0 + b_over_n / w).sqrt())
}

pub const KDE_GRID: usize = 512;

/// Mode of a Gaussian kernel density estimate with Silverman's bandwidth,
/// searched on a 512-point grid spanning the sample range.
pub fn map_estimate(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("MAP of an empty sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Ok(lo);
    }
    let n = sorted.len() as f64;
    let (_, var) = mean_var(&sorted);
    let sd = var.sqrt();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    let mut best = (f64::NEG_INFINITY, lo);
    for g in 0..KDE_GRID {
        let x = lo + (hi - lo) * g as f64 / (KDE_GRID - 1) as f64;
        let dens: f64 = sorted
            .iter()
            .map(|s| {
                let u = (x - s) / h;
                (-0.5 * u * u).exp()
            })
            .sum();
        if dens > best.0 {
            best = (dens, x);
        }
    }
    Ok(best.1)
}

/// Linear-interpolation quantile (type 7) of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

//! Variational fit against the Gibbs sampler on identical independence-model
//! datasets.

use std::io::Write;
use std::time::Instant;

use fdaselect_core::gibbs::{assemble, pooled_band, run_chain, ChainOutput, ChainSpec};
use fdaselect_core::rng::TAG_BAND;
use fdaselect_core::rng::{derive_seed, TAG_CHAIN};
use fdaselect_core::vem::Model;
use fdaselect_core::{
    coefficient_estimates, credible_band, fit_model, generate_scenario, BandOptions, Bands,
    PriorConfig, ScenarioSpec,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io::fmt_f64;
use crate::pool::with_pool;
use crate::study::FitOptions;

pub const COMPARISON_HEADER: [&str; 11] = [
    "dataset",
    "seed",
    "vb_seconds",
    "gibbs_seconds",
    "speedup",
    "max_mean_gap",
    "max_curve_gap",
    "max_rhat",
    "pooled_samples",
    "vb_zero_excluded",
    "gibbs_zero_excluded",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: u64,
    pub seed: u64,
    pub vb_seconds: f64,
    pub gibbs_seconds: f64,
    /// Cross-curve average ξ̂_k from each method.
    pub vb_xi_bar: Vec<f64>,
    pub gibbs_xi_bar: Vec<f64>,
    /// max_k |ξ̄_k(VB) - ξ̄_k(Gibbs)|.
    pub max_mean_gap: f64,
    /// max_{i,k} |ξ̂_ki(VB) - ξ̂_ki(Gibbs)|.
    pub max_curve_gap: f64,
    pub max_rhat: f64,
    pub pooled_samples: usize,
    /// Fraction of (curve, k) pairs with zero true coefficient left out.
    pub vb_zero_excluded: Option<f64>,
    pub gibbs_zero_excluded: Option<f64>,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.gibbs_seconds / self.vb_seconds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub sigma: f64,
    pub rows: Vec<BenchRow>,
    pub mean_speedup: f64,
    /// Chains and bands of the first dataset.
    #[serde(skip)]
    pub first: Option<FirstDataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstDataset {
    pub curve_ids: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub vb_bands: Bands,
    pub gibbs_bands: Bands,
    pub chains: ChainOutput,
}

/// Run both chains of `chain` in parallel and time the whole run.
pub fn timed_gibbs(model: &Model, priors: &PriorConfig, chain: &ChainSpec) -> Result<ChainOutput> {
    let start = Instant::now();
    let chains = (0..chain.chains())
        .into_par_iter()
        .map(|c| run_chain(model, priors, chain, c))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut out = assemble(chains, model.curves(), model.basis_count())?;
    out.wall_time = Some(start.elapsed().as_secs_f64());
    Ok(out)
}

fn excluded_rate(
    truth: Option<&[f64]>,
    m: usize,
    excluded: impl Fn(usize, usize) -> bool,
) -> Option<f64> {
    let truth = truth?;
    let zeros: Vec<usize> = truth
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == 0.0)
        .map(|(k, _)| k)
        .collect();
    if zeros.is_empty() {
        return None;
    }
    let hits = (0..m)
        .flat_map(|i| zeros.iter().map(move |&k| (i, k)))
        .filter(|&(i, k)| excluded(i, k))
        .count();
    Some(hits as f64 / (m * zeros.len()) as f64)
}

/// Both methods in independence mode on `datasets` draws of `spec`.
/// Datasets run one after another so the timings do not compete.
pub fn benchmark_vb_vs_gibbs(
    spec: &ScenarioSpec,
    datasets: usize,
    opts: &FitOptions,
    chain: &ChainSpec,
) -> Result<BenchReport> {
    spec.validate()?;
    let opts = opts.clone().independent();
    let truth = spec.true_coefficients();
    let mut rows = Vec::with_capacity(datasets);
    let mut first = None;
    for r in 0..datasets as u64 {
        let rs = spec.replicate(r);
        let data = generate_scenario(&rs)?;
        let (m, k) = (data.len(), rs.basis.count());
        let model = Model::new(&data, &rs.basis)?;
        let priors = opts.priors(m, k);

        let start = Instant::now();
        let fit = fit_model(&model, &priors, &opts.init(&rs))?;
        let vb_seconds = start.elapsed().as_secs_f64();
        let vb = coefficient_estimates(&fit.state);

        let chain_spec = ChainSpec {
            seed: derive_seed(rs.seed, &[TAG_CHAIN]),
            ..chain.clone()
        };
        let gibbs =
            with_pool(|| timed_gibbs(&model, &PriorConfig::new(m, k).independent(), &chain_spec))?;
        let gibbs_xi_bar: Vec<f64> = (0..k)
            .map(|j| gibbs.xi_hat.column(j).sum() / m as f64)
            .collect();
        let max_mean_gap = vb
            .xi_bar
            .iter()
            .zip(&gibbs_xi_bar)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let max_curve_gap = (&vb.xi_hat - &gibbs.xi_hat).abs().max();
        let z_offset = m * k;
        if r == 0 {
            let points: Vec<Vec<f64>> = data.curves.iter().map(|c| c.t.clone()).collect();
            let band = BandOptions {
                level: opts.band_level,
                draws: opts.band_draws,
                seed: derive_seed(rs.seed, &[TAG_BAND]),
            };
            first = Some(FirstDataset {
                curve_ids: data.curves.iter().map(|c| c.id.clone()).collect(),
                vb_bands: credible_band(&fit.state, &rs.basis, &points, &band)?,
                gibbs_bands: pooled_band(&model, &gibbs, opts.band_level)?,
                points,
                chains: gibbs.clone(),
            });
        }
        rows.push(BenchRow {
            dataset: r,
            seed: rs.seed,
            vb_seconds,
            gibbs_seconds: gibbs.wall_time.unwrap_or(f64::NAN),
            vb_xi_bar: vb.xi_bar.clone(),
            gibbs_xi_bar,
            max_mean_gap,
            max_curve_gap,
            max_rhat: gibbs.rhat.iter().copied().fold(0.0, f64::max),
            pooled_samples: gibbs.pooled_len(),
            vb_zero_excluded: excluded_rate(truth.as_deref(), m, |i, j| fit.state.p[(i, j)] < 0.5),
            gibbs_zero_excluded: excluded_rate(truth.as_deref(), m, |i, j| {
                gibbs.map[z_offset + i * k + j] < 0.5
            }),
        });
    }
    let mean_speedup = rows.iter().map(BenchRow::speedup).sum::<f64>() / rows.len().max(1) as f64;
    Ok(BenchReport {
        scenario: spec.label(),
        sigma: spec.sigma,
        rows,
        mean_speedup,
        first,
    })
}

pub fn write_comparison<W: Write>(out: W, report: &BenchReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for row in &report.rows {
        w.write_record([
            row.dataset.to_string(),
            row.seed.to_string(),
            fmt_f64(row.vb_seconds),
            fmt_f64(row.gibbs_seconds),
            fmt_f64(row.speedup()),
            fmt_f64(row.max_mean_gap),
            fmt_f64(row.max_curve_gap),
            fmt_f64(row.max_rhat),
            row.pooled_samples.to_string(),
            opt(row.vb_zero_excluded),
            opt(row.gibbs_zero_excluded),
        ])?;
    }
    w.flush().map_err(|e| AppError::io("<comparison>", e))?;
    Ok(())
}

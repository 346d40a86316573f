//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdaselect_core::gibbs::ChainSpec;
use fdaselect_core::vem::Correlation;
use fdaselect_core::{
    credible_band, fit_model, fit_report, make_bspline_basis, make_fourier_basis, BandOptions,
    BasisSystem, InitSpec, Interval, Model, PriorConfig, ScenarioSpec, VariationalState,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{benchmark_vb_vs_gibbs, write_comparison, FirstDataset};
use crate::error::{AppError, Result};
use crate::io::{
    create, ingest_csv, write_bands, write_chains, write_coefficients, write_fitted, write_summary,
};
use crate::manifest::{Manifest, VERSION};
use crate::study::{misspecification_study, run_replicates, FitOptions, StudySummary};

pub enum Exit {
    Clap(clap::Error),
    App(AppError),
}

#[derive(Debug, Parser)]
#[command(name = "fdaselect", version = VERSION, about = "Sparse basis selection for functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one data file.
    Fit(FitArgs),
    /// Replicate study on a simulated scenario.
    Simulate(SimulateArgs),
    /// Variational fit against the Gibbs sampler on independent-noise data.
    Bench(BenchArgs),
    /// Credible bands from a saved fit state.
    Bands(BandsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Bspline,
    Fourier,
}

#[derive(Debug, Args)]
struct IterArgs {
    /// Stop when the ELBO gain falls below this.
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// CSV with header curve_id,t,y.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = BasisArg::Bspline)]
    basis: BasisArg,
    /// Number of basis functions.
    #[arg(long = "K", default_value_t = 20)]
    k: usize,
    /// B-spline degree.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Fourier period; defaults to the span of the data.
    #[arg(long)]
    period: Option<f64>,
    /// Treat errors within a curve as independent.
    #[arg(long)]
    independent: bool,
    /// Initial noise variance guess; defaults to the regression-spline MSE.
    #[arg(long)]
    sigma2_guess: Option<f64>,
    /// Starting OU decay. Small values sit on a flat stretch of the ELBO.
    #[arg(long, default_value_t = 6.0)]
    w_init: f64,
    /// Initial scale of q(τ²).
    #[arg(long, default_value_t = 100.0)]
    tau2_init: f64,
    /// Prior mean of σ²; with --sigma2-prior-var sets the inverse-gamma prior.
    #[arg(long, requires = "sigma2_prior_var", conflicts_with_all = ["delta1", "delta2"])]
    sigma2_prior_mean: Option<f64>,
    #[arg(long, requires = "sigma2_prior_mean")]
    sigma2_prior_var: Option<f64>,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Prior inclusion mean of θ.
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[command(flatten)]
    iter: IterArgs,
    /// Break ties in t by a small seeded perturbation.
    #[arg(long)]
    jitter: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: u8,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Generating OU decay.
    #[arg(long)]
    w: Option<f64>,
    #[arg(long, default_value_t = 6.0)]
    w_init: f64,
    #[arg(long)]
    independent: bool,
    /// Fit every dataset with and without the correlation model.
    #[arg(long, conflicts_with = "independent")]
    misspecification: bool,
    #[command(flatten)]
    iter: IterArgs,
    #[arg(long)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: u8,
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of datasets.
    #[arg(long)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, default_value_t = 50)]
    thin: usize,
    /// Fraction of each chain discarded.
    #[arg(long, default_value_t = 0.5)]
    burn_in: f64,
    #[command(flatten)]
    iter: IterArgs,
    /// Also write the chains and both sets of bands for the first dataset.
    #[arg(long)]
    keep_first: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BandsArgs {
    /// state.json written by `fit`.
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What `bands` needs to redraw from a finished fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub basis: BasisSystem,
    pub curve_ids: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub state: VariationalState,
}

pub fn main_with_args<I, T>(args: I) -> std::result::Result<(), Exit>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(Exit::Clap)?;
    let recorded: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let res = match cli.command {
        Command::Fit(a) => cmd_fit(a, recorded),
        Command::Simulate(a) => cmd_simulate(a, recorded),
        Command::Bench(a) => cmd_bench(a, recorded),
        Command::Bands(a) => cmd_bands(a),
    };
    res.map_err(Exit::App)
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| AppError::io(path, e))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(AppError::Usage(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

fn fit_priors(a: &FitArgs, m: usize, k: usize) -> Result<PriorConfig> {
    let mut p = PriorConfig::new(m, k);
    if a.independent {
        p.correlation = Correlation::Independent;
    }
    p.w_init = positive("w-init", a.w_init)?;
    p.elbo_tol = a.iter.tol;
    p.max_iter = a.iter.max_iter;
    if !(a.mu > 0.0 && a.mu < 1.0) {
        return Err(AppError::Usage(format!(
            "--mu must lie in (0, 1), got {}",
            a.mu
        )));
    }
    p.mu.fill(a.mu);
    if let (Some(mean), Some(var)) = (a.sigma2_prior_mean, a.sigma2_prior_var) {
        let (mean, var) = (
            positive("sigma2-prior-mean", mean)?,
            positive("sigma2-prior-var", var)?,
        );
        // Inverse-gamma shape and scale with the requested mean and variance.
        p.delta1 = mean * mean / var + 2.0;
        p.delta2 = mean * (p.delta1 - 1.0);
    }
    if let Some(v) = a.delta1 {
        p.delta1 = v;
    }
    if let Some(v) = a.delta2 {
        p.delta2 = v;
    }
    if let Some(v) = a.lambda1 {
        p.lambda1 = v;
    }
    if let Some(v) = a.lambda2 {
        p.lambda2 = v;
    }
    p.validate(m, k)?;
    Ok(p)
}

fn cmd_fit(a: FitArgs, args: Vec<String>) -> Result<()> {
    let data = ingest_csv(&a.data, a.jitter.then_some(a.seed))?;
    let (lo, hi) = data.span();
    let basis = match a.basis {
        BasisArg::Bspline => make_bspline_basis(a.k, a.degree, Interval::new(lo, hi)?)?,
        BasisArg::Fourier => make_fourier_basis(a.k, a.period.unwrap_or(hi - lo))?,
    };
    let priors = fit_priors(&a, data.len(), a.k)?;
    let init = InitSpec {
        sigma2_guess: a.sigma2_guess,
        tau2_scale: positive("tau2-init", a.tau2_init)?,
    };
    let band = BandOptions {
        level: a.level,
        draws: a.draws,
        seed: a.seed,
    };

    let start = Instant::now();
    let model = Model::new(&data, &basis)?;
    let fit = fit_model(&model, &priors, &init)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut report = fit_report(&model, &fit, &priors, &band)?;
    report.wall_time = Some(seconds);

    out_dir(&a.out)?;
    let ids: Vec<String> = data.curves.iter().map(|c| c.id.clone()).collect();
    write_json(&a.out.join("fit_report.json"), &report)?;
    let p: Vec<Vec<f64>> = (0..data.len()).map(|i| fit.state.p_row(i)).collect();
    write_coefficients(
        create(&a.out.join("coefficients.csv"))?,
        &ids,
        &report.coefficients,
        &p,
    )?;
    write_fitted(
        create(&a.out.join("curve.csv"))?,
        &data,
        &report.mean_curves,
        &report.bands.per_curve,
    )?;
    let state = StateFile {
        basis,
        curve_ids: ids,
        points: data.curves.iter().map(|c| c.t.clone()).collect(),
        state: fit.state,
    };
    write_json(&a.out.join("state.json"), &state)?;
    Manifest::new(
        "fit",
        args,
        json!({ "priors": priors, "init": init, "band": band, "data": a.data }),
        json!({ "seed": a.seed }),
        json!({ "fit_seconds": seconds }),
    )
    .write(&a.out.join("manifest.json"))
}

fn scenario_spec(id: u8, sigma: Option<f64>, w: Option<f64>, seed: u64) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::preset(id, seed)?;
    if let Some(s) = sigma {
        spec = spec.with_sigma(positive("sigma", s)?);
    }
    if let Some(w) = w {
        spec = spec.with_w(Some(positive("w", w)?));
    }
    spec.validate()?;
    Ok(spec)
}

fn summary_csv(path: &Path, s: &StudySummary) -> Result<()> {
    write_summary(create(path)?, &s.coef_mean, &s.coef_sd)
}

fn cmd_simulate(a: SimulateArgs, args: Vec<String>) -> Result<()> {
    if a.replicates == 0 {
        return Err(AppError::Usage("--replicates must be at least 1".into()));
    }
    let spec = scenario_spec(a.scenario, a.sigma, a.w, a.seed)?;
    let mut opts = FitOptions {
        w_init: positive("w-init", a.w_init)?,
        elbo_tol: a.iter.tol,
        max_iter: a.iter.max_iter,
        ..FitOptions::default()
    };
    if a.independent {
        opts = opts.independent();
    }
    out_dir(&a.out)?;
    let start = Instant::now();
    let (timings, primary) = if a.misspecification {
        let s = misspecification_study(&spec, a.replicates, &opts)?;
        summary_csv(&a.out.join("summary_independent.csv"), &s.independent)?;
        write_json(&a.out.join("study.json"), &s)?;
        let t = json!({
            "total_seconds": start.elapsed().as_secs_f64(),
            "fit_seconds_mean": s.correlated.fit_seconds_mean,
            "fit_seconds_mean_independent": s.independent.fit_seconds_mean,
        });
        (t, s.correlated)
    } else {
        let s = run_replicates(&spec, a.replicates, &opts)?;
        write_json(&a.out.join("study.json"), &s)?;
        let t = json!({ "total_seconds": start.elapsed().as_secs_f64(), "fit_seconds_mean": s.fit_seconds_mean });
        (t, s)
    };
    summary_csv(&a.out.join("summary.csv"), &primary)?;
    let seeds: Vec<u64> = (0..a.replicates as u64)
        .map(|r| spec.replicate(r).seed)
        .collect();
    Manifest::new(
        "simulate",
        args,
        json!({ "scenario": spec, "options": opts, "replicates": a.replicates, "misspecification": a.misspecification }),
        json!({ "seed": a.seed, "replicates": seeds }),
        timings,
    )
    .write(&a.out.join("manifest.json"))
}

fn first_dataset_files(dir: &Path, f: &FirstDataset) -> Result<()> {
    write_chains(
        create(&dir.join("chains.csv"))?,
        &f.chains.names,
        &f.chains.chains,
    )?;
    write_bands(
        create(&dir.join("bands_vb.csv"))?,
        &f.curve_ids,
        &f.points,
        &f.vb_bands,
    )?;
    write_bands(
        create(&dir.join("bands_gibbs.csv"))?,
        &f.curve_ids,
        &f.points,
        &f.gibbs_bands,
    )
}

fn cmd_bench(a: BenchArgs, args: Vec<String>) -> Result<()> {
    if a.replicates == 0 {
        return Err(AppError::Usage("--replicates must be at least 1".into()));
    }
    let spec = scenario_spec(a.scenario, a.sigma, None, a.seed)?.with_w(None);
    let chain = ChainSpec {
        iterations: a.iterations,
        thin: a.thin,
        burn_in_fraction: a.burn_in,
        ..ChainSpec::default()
    };
    chain.validate()?;
    let opts = FitOptions {
        elbo_tol: a.iter.tol,
        max_iter: a.iter.max_iter,
        ..FitOptions::default()
    };
    out_dir(&a.out)?;
    let start = Instant::now();
    let report = benchmark_vb_vs_gibbs(&spec, a.replicates, &opts, &chain)?;
    let total = start.elapsed().as_secs_f64();
    write_comparison(create(&a.out.join("comparison.csv"))?, &report)?;
    write_json(&a.out.join("comparison.json"), &report)?;
    if a.keep_first {
        if let Some(f) = &report.first {
            first_dataset_files(&a.out, f)?;
        }
    }
    Manifest::new(
        "bench",
        args,
        json!({
            "scenario": spec,
            "options": opts.clone().independent(),
            "iterations": chain.iterations,
            "thin": chain.thin,
            "burn_in_fraction": chain.burn_in_fraction,
        }),
        json!({ "seed": a.seed, "datasets": report.rows.iter().map(|r| r.seed).collect::<Vec<_>>() }),
        json!({ "total_seconds": total, "mean_speedup": report.mean_speedup }),
    )
    .write(&a.out.join("manifest.json"))
}

fn cmd_bands(a: BandsArgs) -> Result<()> {
    let text = fs::read_to_string(&a.state).map_err(|e| AppError::io(&a.state, e))?;
    let file: StateFile = serde_json::from_str(&text)?;
    let band = BandOptions {
        level: a.level,
        draws: a.draws,
        seed: a.seed,
    };
    let bands = credible_band(&file.state, &file.basis, &file.points, &band)?;
    match &a.out {
        Some(path) => write_bands(create(path)?, &file.curve_ids, &file.points, &bands),
        None => write_bands(
            std::io::stdout().lock(),
            &file.curve_ids,
            &file.points,
            &bands,
        ),
    }
}

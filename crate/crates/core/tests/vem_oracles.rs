use fdaselect_core::ou::ou_corr_matrix;
use fdaselect_core::scenario::noiseless;
use fdaselect_core::vem::{
    beta_log_moments, compute_elbo, decay_objective, e_step, expected_quadratic, initial_state,
    optimize_w, update_beta, update_sigma2, z_log_odds, CurveGram, MONOTONE_SLACK, P_CLAMP,
};
use fdaselect_core::{
    fit_model, generate_scenario, mean_curve, BetaPrecision, Correlation, InitSpec, Model,
    OuKernel, PriorConfig, ScenarioSpec, VariationalState,
};
use libm::lgamma;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Running mean and standard error.
#[derive(Default)]
struct Acc {
    n: f64,
    sum: f64,
    sq: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sq += x * x;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n
    }
    fn se(&self) -> f64 {
        let m = self.mean();
        ((self.sq / self.n - m * m).max(0.0) / (self.n - 1.0)).sqrt()
    }
    fn assert_close(&self, value: f64, what: &str) {
        let gap = (self.mean() - value).abs();
        assert!(
            gap <= 3.0 * self.se(),
            "{what}: analytic {value}, MC {} ± {}",
            self.mean(),
            self.se()
        );
    }
}

struct Instance {
    t: Vec<f64>,
    y: DVector<f64>,
    b: DMatrix<f64>,
    w: f64,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng, n: usize, k: usize, w: f64) -> Self {
        let mut t: Vec<f64> = (0..n)
            .map(|j| (j as f64 + 0.8 * rng.random::<f64>()) / n as f64)
            .collect();
        t.sort_by(f64::total_cmp);
        Self {
            y: DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0),
            b: DMatrix::from_fn(n, k, |_, _| rng.random::<f64>()),
            t,
            w,
        }
    }
    fn psi(&self) -> DMatrix<f64> {
        ou_corr_matrix(&self.t, self.w).unwrap()
    }
    fn gram(&self) -> CurveGram {
        CurveGram::new(&self.y, &self.b, &OuKernel::new(&self.t, self.w).unwrap()).unwrap()
    }
}

fn random_spd(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() - 0.5);
    (&a * a.transpose() + DMatrix::identity(k, k) * 0.2) * scale
}

fn mvn(rng: &mut ChaCha8Rng, mean: &DVector<f64>, chol_l: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol_l * z
}

fn inverse_gamma(rng: &mut ChaCha8Rng, shape: f64, scale: f64) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / scale).unwrap().sample(rng)
}

fn ig_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - lgamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    lgamma(a + b) - lgamma(a) - lgamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

fn residual_quadratic(
    inst: &Instance,
    psi_inv: &DMatrix<f64>,
    z: &[f64],
    beta: &DVector<f64>,
) -> f64 {
    let zb = DVector::from_fn(beta.len(), |j, _| z[j] * beta[j]);
    let r = &inst.y - &inst.b * zb;
    (r.transpose() * psi_inv * &r)[(0, 0)]
}

#[test]
fn expected_quadratic_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let inst = Instance::random(&mut rng, 6, 3, 4.0);
    let gram = inst.gram();
    let psi_inv = inst.psi().try_inverse().unwrap();
    let p = [0.8, 0.35, 0.6];
    let mean = DVector::from_vec(vec![0.7, -1.1, 0.4]);
    let cov = random_spd(&mut rng, 3, 0.3);
    let l = cov.clone().cholesky().unwrap().l();

    for pin in [None, Some((1, 1.0)), Some((2, 0.0))] {
        let analytic = expected_quadratic(&gram, &p, &mean, &cov, pin).unwrap();
        let mut acc = Acc::default();
        for _ in 0..100_000 {
            let z: Vec<f64> = (0..3)
                .map(|j| match pin {
                    Some((k, r)) if k == j => r,
                    _ => f64::from(u8::from(rng.random::<f64>() < p[j])),
                })
                .collect();
            acc.push(residual_quadratic(
                &inst,
                &psi_inv,
                &z,
                &mvn(&mut rng, &mean, &l),
            ));
        }
        acc.assert_close(analytic, &format!("quadratic with pin {pin:?}"));
    }
}

#[test]
fn expected_quadratic_closed_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = Instance::random(&mut rng, 5, 2, 3.0);
    let gram = inst.gram();
    let mean = DVector::from_vec(vec![3.0, -2.0]);
    let zero = DMatrix::zeros(2, 2);
    let v = expected_quadratic(&gram, &[0.0, 0.0], &mean, &zero, None).unwrap();
    assert!((v - gram.yqy).abs() < 1e-12);

    let indep = CurveGram::new(&inst.y, &inst.b, &OuKernel::independent(&inst.t).unwrap()).unwrap();
    let rss = (&inst.y - &inst.b * &mean).norm_squared();
    let v = expected_quadratic(&indep, &[1.0, 1.0], &mean, &zero, None).unwrap();
    assert!((v - rss).abs() < 1e-10 * rss.max(1.0));
}

#[test]
fn z_log_odds_matches_enumeration_and_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let inst = Instance::random(&mut rng, 5, 2, 2.0);
    let gram = inst.gram();
    let psi_inv = inst.psi().try_inverse().unwrap();
    let p = [0.45, 0.7];
    let mean = DVector::from_vec(vec![0.9, -0.6]);
    let cov = random_spd(&mut rng, 2, 0.2);
    let l = cov.clone().cholesky().unwrap().l();
    let (s_shape, s_scale) = (6.0, 1.5);
    let (a1, a2) = (1.3, 0.7);
    let (lt, l1) = beta_log_moments(a1, a2);
    let e_inv_sigma2 = s_shape / s_scale;
    let theta = Beta::new(a1, a2).unwrap();

    for k in 0..2 {
        let analytic = z_log_odds(&gram, &p, k, &mean, &cov, e_inv_sigma2, lt, l1);
        let mut acc = Acc::default();
        for _ in 0..200_000 {
            let beta = mvn(&mut rng, &mean, &l);
            let sigma2 = inverse_gamma(&mut rng, s_shape, s_scale);
            let th: f64 = theta.sample(&mut rng);
            let mut z: Vec<f64> = p
                .iter()
                .map(|&pj| f64::from(u8::from(rng.random::<f64>() < pj)))
                .collect();
            // Enumerate Z_k ∈ {0, 1}; terms without Z_k cancel.
            let mut joint = [0.0; 2];
            for (r, slot) in joint.iter_mut().enumerate() {
                z[k] = r as f64;
                let prior = if r == 1 { th.ln() } else { (1.0 - th).ln() };
                *slot = -0.5 * residual_quadratic(&inst, &psi_inv, &z, &beta) / sigma2 + prior;
            }
            acc.push(joint[1] - joint[0]);
        }
        acc.assert_close(analytic, &format!("log odds of Z_{k}"));
    }
}

fn tiny_priors() -> PriorConfig {
    let mut p = PriorConfig::new(1, 2);
    p.mu.fill(0.4);
    p.delta1 = 3.0;
    p.delta2 = 0.2;
    p.lambda1 = 2.5;
    p.lambda2 = 1.5;
    p
}

fn tiny_state(rng: &mut ChaCha8Rng) -> VariationalState {
    VariationalState {
        p: DMatrix::from_row_slice(1, 2, &[0.65, 0.3]),
        a1: DMatrix::from_row_slice(1, 2, &[1.2, 0.8]),
        a2: DMatrix::from_row_slice(1, 2, &[0.9, 1.6]),
        beta_mean: vec![DVector::from_vec(vec![0.5, -0.8])],
        beta_cov: vec![random_spd(rng, 2, 0.25)],
        sigma2_shape: 7.0,
        sigma2_scale: 2.0,
        tau2_shape: 4.0,
        tau2_scale: 5.0,
        w: 3.0,
        elbo_trace: vec![],
    }
}

#[test]
fn elbo_matches_monte_carlo_joint_minus_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(9001);
    let inst = Instance::random(&mut rng, 4, 2, 3.0);
    let gram = inst.gram();
    let psi = inst.psi();
    let psi_inv = psi.clone().try_inverse().unwrap();
    let logdet_psi = psi
        .clone()
        .cholesky()
        .unwrap()
        .l()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.ln())
        .sum::<f64>();
    let priors = tiny_priors();
    let s = tiny_state(&mut rng);
    let analytic = compute_elbo(&s, std::slice::from_ref(&gram), &priors)
        .unwrap()
        .total();

    let cov = &s.beta_cov[0];
    let l = cov.clone().cholesky().unwrap().l();
    let cov_inv = cov.clone().try_inverse().unwrap();
    let logdet_cov = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
    let (n, k) = (4.0, 2usize);
    let thetas: Vec<Beta<f64>> = (0..k)
        .map(|j| Beta::new(s.a1[(0, j)], s.a2[(0, j)]).unwrap())
        .collect();
    let mut acc = Acc::default();
    for _ in 0..1_000_000 {
        let th: Vec<f64> = thetas.iter().map(|d| d.sample(&mut rng)).collect();
        let z: Vec<f64> = (0..k)
            .map(|j| f64::from(u8::from(rng.random::<f64>() < s.p[(0, j)])))
            .collect();
        let beta = mvn(&mut rng, &s.beta_mean[0], &l);
        let sigma2 = inverse_gamma(&mut rng, s.sigma2_shape, s.sigma2_scale);
        let tau2 = inverse_gamma(&mut rng, s.tau2_shape, s.tau2_scale);

        let mut log_p = -0.5 * n * (LN_2PI + sigma2.ln())
            - 0.5 * logdet_psi
            - 0.5 * residual_quadratic(&inst, &psi_inv, &z, &beta) / sigma2;
        let bb = beta.norm_squared();
        log_p += -0.5 * k as f64 * (LN_2PI + sigma2.ln() + tau2.ln()) - 0.5 * bb / (sigma2 * tau2);
        log_p += ig_logpdf(sigma2, priors.delta1, priors.delta2)
            + ig_logpdf(tau2, priors.lambda1, priors.lambda2);
        let mut log_q = ig_logpdf(sigma2, s.sigma2_shape, s.sigma2_scale)
            + ig_logpdf(tau2, s.tau2_shape, s.tau2_scale);
        let d = &beta - &s.beta_mean[0];
        log_q +=
            -0.5 * (k as f64 * LN_2PI + logdet_cov) - 0.5 * (d.transpose() * &cov_inv * &d)[(0, 0)];
        for j in 0..k {
            let mu = priors.mu[(0, j)];
            log_p += if z[j] == 1.0 {
                th[j].ln()
            } else {
                (1.0 - th[j]).ln()
            };
            log_p += beta_logpdf(th[j], mu, 1.0 - mu);
            let pj = s.p[(0, j)];
            log_q += if z[j] == 1.0 {
                pj.ln()
            } else {
                (1.0 - pj).ln()
            };
            log_q += beta_logpdf(th[j], s.a1[(0, j)], s.a2[(0, j)]);
        }
        acc.push(log_p - log_q);
    }
    acc.assert_close(analytic, "ELBO");
}

#[test]
fn sigma2_scale_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let insts: Vec<Instance> = (0..2)
        .map(|_| Instance::random(&mut rng, 5, 2, 5.0))
        .collect();
    let grams: Vec<CurveGram> = insts.iter().map(Instance::gram).collect();
    let psi_inv: Vec<DMatrix<f64>> = insts
        .iter()
        .map(|i| i.psi().try_inverse().unwrap())
        .collect();
    let mut s = tiny_state(&mut rng);
    s.p = DMatrix::from_row_slice(2, 2, &[0.65, 0.3, 0.9, 0.2]);
    s.a1 = s.p.map(|p| p + 0.5);
    s.a2 = s.p.map(|p| 1.5 - p);
    s.beta_mean.push(DVector::from_vec(vec![-0.3, 1.1]));
    s.beta_cov.push(random_spd(&mut rng, 2, 0.1));
    let mut priors = tiny_priors();
    priors.mu = DMatrix::from_element(2, 2, 0.5);
    let (_, scale) = update_sigma2(&s, &grams, &priors).unwrap();

    let e_inv_tau2 = s.tau2_shape / s.tau2_scale;
    let ls: Vec<DMatrix<f64>> = s
        .beta_cov
        .iter()
        .map(|c| c.clone().cholesky().unwrap().l())
        .collect();
    let mut acc = Acc::default();
    for _ in 0..200_000 {
        let mut total = 2.0 * priors.delta2;
        for i in 0..2 {
            let z: Vec<f64> = (0..2)
                .map(|j| f64::from(u8::from(rng.random::<f64>() < s.p[(i, j)])))
                .collect();
            let beta = mvn(&mut rng, &s.beta_mean[i], &ls[i]);
            total += residual_quadratic(&insts[i], &psi_inv[i], &z, &beta)
                + e_inv_tau2 * beta.norm_squared();
        }
        acc.push(0.5 * total);
    }
    acc.assert_close(scale, "δ*₂");
}

#[test]
fn beta_update_reduces_to_ridge_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = Instance::random(&mut rng, 12, 4, 1.0);
    let gram = CurveGram::new(&inst.y, &inst.b, &OuKernel::independent(&inst.t).unwrap()).unwrap();
    let btb = inst.b.transpose() * &inst.b;
    let ridge =
        (DMatrix::identity(4, 4) + &btb).try_inverse().unwrap() * inst.b.transpose() * &inst.y;
    for rule in [
        BetaPrecision::ProductOfMeans,
        BetaPrecision::FullExpectation,
    ] {
        let (mean, _) = update_beta(&gram, &[1.0; 4], 1.0, 1.0, rule).unwrap();
        assert!((&mean - &ridge).abs().max() < 1e-10, "{rule:?}");
    }
}

fn seeded_fits() -> Vec<(ScenarioSpec, Correlation)> {
    (0..20u64)
        .map(|s| {
            let spec = match s % 4 {
                0 => ScenarioSpec::scenario1(s),
                1 => ScenarioSpec::scenario2(s),
                2 => ScenarioSpec::scenario3(s),
                _ => ScenarioSpec::scenario1(s).with_w(None),
            };
            let corr = if s % 5 == 4 {
                Correlation::Independent
            } else {
                Correlation::OrnsteinUhlenbeck
            };
            (spec, corr)
        })
        .collect()
}

#[test]
fn invariants_hold_every_iteration_on_twenty_seeded_fits() {
    for (spec, corr) in seeded_fits() {
        let data = generate_scenario(&spec).unwrap();
        let model = Model::new(&data, &spec.basis).unwrap();
        let (m, k) = (model.curves(), model.basis_count());
        let mut priors = PriorConfig::new(m, k);
        priors.correlation = corr;
        priors.w_init = 6.0;
        let init = InitSpec {
            sigma2_guess: Some(spec.sigma * spec.sigma),
            tau2_scale: 100.0,
        };
        let (mut state, _) = initial_state(&model, &priors, &init).unwrap();
        let shape_sigma = (model.total_observations() + m * k) as f64 / 2.0;
        let shape_tau = (m * k) as f64 / 2.0;
        let mut grams = model.grams(corr, state.w).unwrap();
        let mut last = f64::NEG_INFINITY;
        for iter in 0..priors.max_iter {
            e_step(&model, &mut state, &grams, &priors).unwrap();
            if corr == Correlation::OrnsteinUhlenbeck {
                state.w = optimize_w(&model, &state, &priors).unwrap().w;
                grams = model.grams(corr, state.w).unwrap();
            }
            assert_eq!(state.sigma2_shape, shape_sigma);
            assert_eq!(state.tau2_shape, shape_tau);
            for (a1, a2) in state.a1.iter().zip(state.a2.iter()) {
                assert!((a1 + a2 - 2.0).abs() <= 2.0 * f64::EPSILON && *a1 > 0.0 && *a2 > 0.0);
            }
            assert!(state
                .p
                .iter()
                .all(|p| (P_CLAMP..=1.0 - P_CLAMP).contains(p)));
            assert!(state
                .beta_cov
                .iter()
                .all(|c| c.clone().cholesky().is_some()));
            let elbo = compute_elbo(&state, &grams, &priors).unwrap().total();
            assert!(
                elbo >= last - MONOTONE_SLACK * elbo.abs().max(1.0),
                "{} iteration {iter}: {last} -> {elbo}",
                spec.label()
            );
            if elbo - last < priors.elbo_tol {
                break;
            }
            last = elbo;
        }

        let fit = fit_model(&model, &priors, &init).unwrap();
        assert!(fit.iterations <= priors.max_iter);
        for pair in fit.state.elbo_trace.windows(2) {
            assert!(pair[1] >= pair[0] - MONOTONE_SLACK * pair[1].abs().max(1.0));
        }
    }
}

#[test]
fn m_step_optimum_is_stationary() {
    let mut checked = 0;
    for seed in 0..6u64 {
        let spec = ScenarioSpec::scenario1(100 + seed);
        let data = generate_scenario(&spec).unwrap();
        let model = Model::new(&data, &spec.basis).unwrap();
        let mut priors = PriorConfig::new(model.curves(), model.basis_count());
        priors.w_init = 6.0;
        priors.max_iter = 20;
        let fit = fit_model(
            &model,
            &priors,
            &InitSpec {
                sigma2_guess: Some(0.01),
                tau2_scale: 100.0,
            },
        )
        .unwrap();
        let entry = fit.state.w;
        let search = optimize_w(&model, &fit.state, &priors).unwrap();
        let f = |w: f64| decay_objective(&model, &fit.state, &priors, w).unwrap();
        let best = f(search.w);
        assert!(best >= f(entry) - 1e-12 * best.abs().max(1.0));
        let (lo, hi) = priors.w_bounds;
        if search.w <= lo * 1.01 || search.w >= hi / 1.01 {
            continue;
        }
        checked += 1;
        let h = 1e-4 * search.w;
        let (up, down) = (f(search.w + h), f(search.w - h));
        assert!(
            up - best <= 1e-8 * best.abs().max(1.0),
            "right difference {}",
            up - best
        );
        assert!(
            down - best <= 1e-8 * best.abs().max(1.0),
            "left difference {}",
            down - best
        );
        let slope = (up - down) / (2.0 * h);
        assert!(slope.abs() <= 1e-4 * best.abs().max(1.0), "slope {slope}");
    }
    assert!(checked >= 3, "only {checked} interior optima");
}

#[test]
fn noiseless_input_is_reproduced() {
    let spec = ScenarioSpec::scenario1(0);
    let data = noiseless(&spec).unwrap();
    for corr in [Correlation::OrnsteinUhlenbeck, Correlation::Independent] {
        let model = Model::new(&data, &spec.basis).unwrap();
        let mut priors = PriorConfig::new(model.curves(), model.basis_count());
        priors.correlation = corr;
        priors.w_init = 6.0;
        let fit = fit_model(
            &model,
            &priors,
            &InitSpec {
                sigma2_guess: Some(1e-8),
                tau2_scale: 100.0,
            },
        )
        .unwrap();
        let points: Vec<Vec<f64>> = data.curves.iter().map(|c| c.t.clone()).collect();
        let fitted = mean_curve(&fit.state, &spec.basis, &points).unwrap();
        for (c, f) in data.curves.iter().zip(&fitted) {
            let mse = c.y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / c.len() as f64;
            assert!(mse.sqrt() < 1e-3, "{corr:?}: rmse {}", mse.sqrt());
        }
    }
}

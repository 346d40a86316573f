use fdaselect_core::ou::{dense_logdet, dense_solve, ou_corr_matrix};
use fdaselect_core::OuKernel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn points_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..max).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        // Enforce a minimum gap so Ψ stays well conditioned for small w.
        let mut out: Vec<f64> = Vec::new();
        for x in v {
            if out.last().is_none_or(|l| x - l > 1e-3) {
                out.push(x);
            }
        }
        if out.len() < 2 {
            out = vec![0.0, 0.5];
        }
        out
    })
}

#[test]
fn tridiagonal_solve_matches_dense_cholesky() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let t = sorted_points(&mut rng, 50);
    let rhs = DMatrix::from_fn(t.len(), 3, |_, _| rng.random::<f64>() - 0.5);
    let fast = OuKernel::new(&t, 6.0).unwrap().solve(&rhs).unwrap();
    let dense = dense_solve(&t, 6.0, &rhs).unwrap();
    for (a, b) in fast.iter().zip(dense.iter()) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn solve_inverts_multiplication() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = sorted_points(&mut rng, 40);
    let psi = ou_corr_matrix(&t, 2.5).unwrap();
    let x = DMatrix::from_fn(t.len(), 2, |_, _| rng.random::<f64>());
    let back = OuKernel::new(&t, 2.5).unwrap().solve(&(&psi * &x)).unwrap();
    assert!((&back - &x).norm() <= 1e-8 * x.norm());
}

#[test]
fn huge_decay_solve_is_identity() {
    let t: Vec<f64> = (0..30).map(|j| j as f64 / 29.0).collect();
    let rhs = DMatrix::from_fn(30, 2, |r, c| (r + 3 * c) as f64);
    let out = OuKernel::new(&t, 1e6).unwrap().solve(&rhs).unwrap();
    assert!((&out - &rhs).abs().max() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_spd_and_inverse_tridiagonal(t in points_strategy(40), logw in -3.0f64..6.0) {
        let w = 10f64.powf(logw);
        let psi = ou_corr_matrix(&t, w).unwrap();
        prop_assert!(psi.clone().cholesky().is_some());
        let inv = psi.try_inverse().unwrap();
        let top = inv.abs().max();
        for r in 0..t.len() {
            for c in 0..t.len() {
                if r.abs_diff(c) >= 2 {
                    prop_assert!(inv[(r, c)].abs() < 1e-8 * top, "({r},{c}) = {}", inv[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn logdet_matches_dense(t in points_strategy(200), logw in -1.0f64..3.0) {
        let w = 10f64.powf(logw);
        let fast = OuKernel::new(&t, w).unwrap().logdet();
        let dense = dense_logdet(&t, w).unwrap();
        prop_assert!((fast - dense).abs() <= 1e-8 * dense.abs().max(1.0), "{fast} vs {dense}");
    }

    #[test]
    fn markov_screening(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, w in 0.01f64..20.0) {
        let mut t = [a, b, c];
        t.sort_by(f64::total_cmp);
        prop_assume!(t[1] - t[0] > 1e-6 && t[2] - t[1] > 1e-6);
        let psi = ou_corr_matrix(&t, w).unwrap();
        let product = psi[(0, 1)] * psi[(1, 2)];
        // Identity holds up to rounding of the exponent arguments.
        let slack = 4.0 * f64::EPSILON * (1.0 + w * (t[2] - t[0]));
        prop_assert!((psi[(0, 2)] - product).abs() <= slack * product);
    }
}

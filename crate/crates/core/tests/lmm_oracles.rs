mod common;

use madpfi_core::lmm::{fit_lmm, profiled_deviance, DesignMatrix, Method};
use madpfi_core::synthetic::closed_form_oneway_reml;
use nalgebra::DMatrix;

use common::lmm::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn zero_theta_is_ordinary_least_squares() {
    for seed in 0..50 {
        let pr = random_problem(seed, 60);
        let (beta, rss) = ols(&pr.design, &pr.y);
        let (n, p) = (pr.design.n() as f64, pr.design.p() as f64);
        for method in [Method::Ml, Method::Reml] {
            let d = profiled_deviance(&pr.design, &pr.y, 0.0, method).unwrap();
            for (a, b) in d.beta.iter().zip(beta.iter()) {
                assert!(close(*a, *b, 1e-8), "seed {seed}: beta {a} vs {b}");
            }
            let dof = if method == Method::Ml { n } else { n - p };
            assert!(close(d.sigma2, rss / dof, 1e-8), "seed {seed}");
        }
    }
}

#[test]
fn balanced_oneway_matches_closed_form() {
    for seed in 0..50 {
        let (pr, groups) = balanced_oneway(seed);
        let oracle = closed_form_oneway_reml(&pr.y, &groups).unwrap();
        let fit = fit_lmm(&pr.design, &pr.y, Method::Reml).unwrap();
        assert!(close(fit.sigma2, oracle.sigma2, 1e-8), "seed {seed}: {} vs {}", fit.sigma2, oracle.sigma2);
        assert!(
            (fit.sigma_b2 - oracle.sigma_b2).abs() <= 1e-8 * oracle.sigma2.max(1.0),
            "seed {seed}: {} vs {}",
            fit.sigma_b2,
            oracle.sigma_b2
        );
        if oracle.sigma_b2 == 0.0 {
            assert_eq!(fit.theta, 0.0);
        }
    }
}

#[test]
fn optimum_dominates_theta_grid() {
    let grid = theta_grid_1000();
    for seed in 0..20 {
        let pr = random_problem(1000 + seed, 80);
        for method in [Method::Ml, Method::Reml] {
            let fit = fit_lmm(&pr.design, &pr.y, method).unwrap();
            let best = grid
                .iter()
                .map(|&t| profiled_deviance(&pr.design, &pr.y, t, method).unwrap().deviance)
                .fold(f64::INFINITY, f64::min);
            assert!(fit.deviance <= best + 1e-6, "seed {seed} {method}: {} > {best}", fit.deviance);
        }
    }
}

#[test]
fn profiled_deviance_matches_dense_density() {
    for seed in 0..40 {
        let pr = random_problem(2000 + seed, 30);
        for theta in [0.0, 0.05, 0.3, 1.0, 2.5, 10.0] {
            for method in [Method::Ml, Method::Reml] {
                let fast = profiled_deviance(&pr.design, &pr.y, theta, method).unwrap().deviance;
                let dense = dense_deviance(&pr.design, &pr.y, theta, method);
                assert!((fast - dense).abs() < 1e-7, "seed {seed} theta {theta} {method}: {fast} vs {dense}");
            }
        }
    }
}

#[test]
fn rescaling_the_response() {
    let a: f64 = 7.5;
    for seed in 0..10 {
        let pr = random_problem(3000 + seed, 60);
        let scaled: Vec<f64> = pr.y.iter().map(|v| a * v).collect();
        let (n, p) = (pr.design.n() as f64, pr.design.p() as f64);
        for (method, dof) in [(Method::Ml, n), (Method::Reml, n - p)] {
            let base = fit_lmm(&pr.design, &pr.y, method).unwrap();
            let big = fit_lmm(&pr.design, &scaled, method).unwrap();
            assert!((base.theta - big.theta).abs() < 1e-6 * base.theta.max(1.0));
            assert!(close(big.sigma2, a * a * base.sigma2, 1e-6));
            for (b1, b2) in base.beta.iter().zip(&big.beta) {
                assert!(close(*b2, a * b1, 1e-6));
            }
            assert!((big.loglik - (base.loglik - dof * a.ln())).abs() < 1e-6);
            for (z1, z2) in base.z.iter().zip(&big.z) {
                assert!(close(*z1, *z2, 1e-5));
            }
        }
    }
}

#[test]
fn row_order_does_not_matter() {
    for seed in 0..10 {
        let pr = random_problem(4000 + seed, 60);
        let n = pr.design.n();
        let order: Vec<usize> = (0..n).rev().collect();
        let x = DMatrix::from_fn(n, pr.design.p(), |i, j| pr.design.x()[(order[i], j)]);
        let labels: Vec<&str> = order
            .iter()
            .map(|&i| pr.design.group_labels()[pr.design.groups()[i]].as_str())
            .collect();
        let design = DesignMatrix::new(x, pr.design.names().to_vec(), true, &labels).unwrap();
        let y: Vec<f64> = order.iter().map(|&i| pr.y[i]).collect();
        let a = fit_lmm(&pr.design, &pr.y, Method::Reml).unwrap();
        let b = fit_lmm(&design, &y, Method::Reml).unwrap();
        assert!((a.deviance - b.deviance).abs() < 1e-8);
        for (x1, x2) in a.beta.iter().zip(&b.beta) {
            assert!(close(*x1, *x2, 1e-6));
        }
    }
}

#[test]
fn reported_criteria_are_consistent() {
    let pr = random_problem(77, 60);
    let fit = fit_lmm(&pr.design, &pr.y, Method::Ml).unwrap();
    let k = (fit.p_fixed + 2) as f64;
    assert_eq!(fit.loglik, -0.5 * fit.deviance);
    assert!((fit.aic - (-2.0 * fit.loglik + 2.0 * k)).abs() < 1e-9);
    assert!((fit.bic - (-2.0 * fit.loglik + k * (fit.n as f64).ln())).abs() < 1e-9);
    assert!(fit.r2_marginal <= fit.r2_conditional && fit.r2_conditional <= 1.0);
    assert!(fit.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
}

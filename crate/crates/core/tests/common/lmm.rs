//! Dense reference computations for the mixed model.

use madpfi_core::lmm::{DesignMatrix, Method, THETA_MAX};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub struct Problem {
    pub design: DesignMatrix,
    pub y: Vec<f64>,
}

/// Random intercept-plus-predictors problem with at most `max_n` rows.
pub fn random_problem(seed: u64, max_n: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    loop {
        let q = rng.random_range(3..=7);
        let sizes: Vec<usize> = (0..q).map(|_| rng.random_range(1..=6)).collect();
        let n: usize = sizes.iter().sum();
        let p = rng.random_range(1..=4);
        if n > max_n || n < p + 3 || sizes.iter().all(|&s| s < 2) {
            continue;
        }
        let groups: Vec<String> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(format!("g{g}"), s))
            .collect();
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { std.sample(&mut rng) * (j as f64) });
        let sigma_b = rng.random_range(0.0..2.0);
        let effects: Vec<f64> = (0..q).map(|_| sigma_b * std.sample(&mut rng)).collect();
        let beta: Vec<f64> = (0..p).map(|_| 3.0 * std.sample(&mut rng)).collect();
        let mut row = 0;
        let mut y = Vec::with_capacity(n);
        for (g, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                let mean: f64 = (0..p).map(|j| x[(row, j)] * beta[j]).sum();
                y.push(mean + effects[g] + std.sample(&mut rng));
                row += 1;
            }
        }
        let names = (0..p).map(|j| if j == 0 { "(Intercept)".into() } else { format!("x{j}") }).collect();
        if let Ok(design) = DesignMatrix::new(x, names, true, &groups) {
            return Problem { design, y };
        }
    }
}

/// Balanced one-way layout, intercept only.
pub fn balanced_oneway(seed: u64) -> (Problem, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let q = rng.random_range(2..=8);
    let per = rng.random_range(2..=6);
    let sigma_b = rng.random_range(0.0..3.0);
    let sigma = rng.random_range(0.2..2.0);
    let mu = rng.random_range(-10.0..10.0);
    let mut y = Vec::new();
    let mut groups = Vec::new();
    for g in 0..q {
        let b = sigma_b * std.sample(&mut rng);
        for _ in 0..per {
            y.push(mu + b + sigma * std.sample(&mut rng));
            groups.push(format!("g{g}"));
        }
    }
    let x = DMatrix::from_element(q * per, 1, 1.0);
    let design = DesignMatrix::new(x, vec!["(Intercept)".into()], true, &groups).unwrap();
    (Problem { design, y }, groups)
}

/// Ordinary least squares through a QR factorization: `(beta, rss)`.
pub fn ols(design: &DesignMatrix, y: &[f64]) -> (DVector<f64>, f64) {
    let x = design.x().clone();
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * &yv;
    let beta = qr.r().solve_upper_triangular(&qty).expect("full rank");
    let rss = (&yv - &x * &beta).norm_squared();
    (beta, rss)
}

/// Marginal covariance shape `I + theta^2 Z Z'`.
fn v_matrix(design: &DesignMatrix, theta: f64) -> DMatrix<f64> {
    let g = design.groups();
    let n = design.n();
    DMatrix::from_fn(n, n, |i, j| {
        let same = if g[i] == g[j] { theta * theta } else { 0.0 };
        same + if i == j { 1.0 } else { 0.0 }
    })
}

/// `-2` times the Gaussian log-density of `y` with mean `mean` and
/// covariance `sigma`, through a Cholesky factor.
pub fn neg2_log_density(y: &DVector<f64>, mean: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = sigma.clone().cholesky().expect("positive definite");
    let r = y - mean;
    let w = chol.l().solve_lower_triangular(&r).unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    n * (2.0 * std::f64::consts::PI).ln() + logdet + w.norm_squared()
}

/// Deviance at `theta` with `beta` and `sigma^2` at their optima, from
/// dense matrices.
pub fn dense_deviance(design: &DesignMatrix, y: &[f64], theta: f64, method: Method) -> f64 {
    let x = design.x();
    let (n, p) = x.shape();
    let yv = DVector::from_column_slice(y);
    let v = v_matrix(design, theta);
    let vinv = v.clone().try_inverse().unwrap();
    let xtvx = x.transpose() * &vinv * x;
    let beta = xtvx.clone().try_inverse().unwrap() * x.transpose() * &vinv * &yv;
    let mean = x * &beta;
    let r = &yv - &mean;
    let quad = (r.transpose() * &vinv * &r)[(0, 0)];
    match method {
        Method::Ml => {
            let s2 = quad / n as f64;
            neg2_log_density(&yv, &mean, &(v * s2))
        }
        Method::Reml => {
            let s2 = quad / (n - p) as f64;
            let sigma = v * s2;
            let info = x.transpose() * sigma.clone().try_inverse().unwrap() * x;
            neg2_log_density(&yv, &mean, &sigma) + info.determinant().ln()
                - p as f64 * (2.0 * std::f64::consts::PI).ln()
        }
    }
}

/// 500 linear points on [0, 5] and 500 log-spaced points up to the search bound.
pub fn theta_grid_1000() -> Vec<f64> {
    let linear = (0..500).map(|i| 5.0 * i as f64 / 499.0);
    let log = (0..500).map(|i| 10f64.powf(-4.0 + (THETA_MAX.log10() + 4.0) * i as f64 / 499.0));
    linear.chain(log).collect()
}

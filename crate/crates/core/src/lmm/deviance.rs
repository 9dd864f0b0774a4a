use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{DesignMatrix, Method};
use crate::error::{Error, Result};

/// Largest accepted condition number of the (equilibrated) `X'V^-1X`.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct ProfiledDeviance {
    pub deviance: f64,
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

/// Per-group sufficient statistics, split into within-group scatter and
/// group sums so that no `theta`-dependent cancellation occurs.
pub(super) struct GroupedSums<'a> {
    design: &'a DesignMatrix,
    y: &'a [f64],
    sizes: Vec<f64>,
    /// `X_g' 1` per group.
    col_sums: Vec<DVector<f64>>,
    /// `1' y_g` per group.
    y_sums: Vec<f64>,
    /// Sum over groups of the centered `X_g' X_g`.
    within_xx: DMatrix<f64>,
    /// Sum over groups of the centered `X_g' y_g`.
    within_xy: DVector<f64>,
}

pub(super) struct Evaluation {
    pub deviance: f64,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub xtvx_inv: DMatrix<f64>,
}

impl<'a> GroupedSums<'a> {
    pub fn new(design: &'a DesignMatrix, y: &'a [f64]) -> Result<Self> {
        let (n, p) = (design.n(), design.p());
        if y.len() != n {
            return Err(Error::Shape(format!("response has {} values for {n} rows", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("response contains non-finite values".into()));
        }
        let q = design.q();
        let x = design.x();
        let sizes_u = design.group_sizes();
        let sizes: Vec<f64> = sizes_u.iter().map(|&s| s as f64).collect();

        let mut col_sums = vec![DVector::zeros(p); q];
        let mut y_sums = vec![0.0; q];
        for (i, &g) in design.groups().iter().enumerate() {
            col_sums[g] += x.row(i).transpose();
            y_sums[g] += y[i];
        }
        let col_means: Vec<DVector<f64>> =
            col_sums.iter().zip(&sizes).map(|(s, &n)| s / n).collect();
        let y_means: Vec<f64> = y_sums.iter().zip(&sizes).map(|(s, n)| s / n).collect();

        let mut within_xx = DMatrix::zeros(p, p);
        let mut within_xy = DVector::zeros(p);
        for (i, &g) in design.groups().iter().enumerate() {
            let xc = x.row(i).transpose() - &col_means[g];
            let yc = y[i] - y_means[g];
            within_xx.ger(1.0, &xc, &xc, 1.0);
            within_xy.axpy(yc, &xc, 1.0);
        }
        Ok(GroupedSums {
            design,
            y,
            sizes,
            col_sums,
            y_sums,
            within_xx,
            within_xy,
        })
    }

    /// `X'V^-1X` and `X'V^-1y` at `theta`.
    fn normal_equations(&self, theta: f64) -> (DMatrix<f64>, DVector<f64>) {
        let t2 = theta * theta;
        let mut a = self.within_xx.clone();
        let mut b = self.within_xy.clone();
        for ((s, &yt), &n) in self.col_sums.iter().zip(&self.y_sums).zip(&self.sizes) {
            // V_g^-1 = I - t2/(1 + n t2) 11', so the between-group part of
            // X_g'V_g^-1X_g is s s' / (n (1 + n t2)).
            let w = 1.0 / (n * (1.0 + n * t2));
            a.ger(w, s, s, 1.0);
            b.axpy(w * yt, s, 1.0);
        }
        (a, b)
    }

    /// GLS solution at `theta`: Cholesky factor of `X'V^-1X`, `beta`,
    /// per-group residual sums, `r'V^-1r` and `log|V|`.
    fn solve(&self, theta: f64) -> Result<Solved> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::Validation(format!("theta must be finite and >= 0, got {theta}")));
        }
        let (a, b) = self.normal_equations(theta);
        check_conditioning(&a, self.design.names())?;
        let chol = Cholesky::new(a).ok_or_else(|| Error::RankDeficient {
            columns: self.design.names().to_vec(),
        })?;
        let beta = chol.solve(&b);

        let t2 = theta * theta;
        let resid = DVector::from_column_slice(self.y) - self.design.x() * &beta;
        let q = self.sizes.len();
        let mut sums = vec![0.0; q];
        for (i, &g) in self.design.groups().iter().enumerate() {
            sums[g] += resid[i];
        }
        let mut quad = 0.0;
        for (i, &g) in self.design.groups().iter().enumerate() {
            let d = resid[i] - sums[g] / self.sizes[g];
            quad += d * d;
        }
        let mut log_det_v = 0.0;
        for (s, &n) in sums.iter().zip(&self.sizes) {
            quad += s * s / (n * (1.0 + n * t2));
            log_det_v += (n * t2).ln_1p();
        }
        let scale: f64 = self.y.iter().map(|v| v * v).sum();
        if !(quad > 1e-24 * scale) || !quad.is_finite() {
            return Err(Error::Degenerate(format!(
                "residual sum of squares is {quad:e}; the model fits the data exactly"
            )));
        }
        Ok(Solved {
            chol,
            beta,
            sums,
            quad,
            log_det_v,
        })
    }

    fn dof(&self, method: Method) -> f64 {
        let (n, p) = (self.design.n(), self.design.p());
        match method {
            Method::Ml => n as f64,
            Method::Reml => (n - p) as f64,
        }
    }

    pub fn evaluate(&self, theta: f64, method: Method) -> Result<Evaluation> {
        let Solved {
            chol,
            beta,
            quad,
            log_det_v,
            ..
        } = self.solve(theta)?;
        let dof = self.dof(method);
        let sigma2 = quad / dof;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let mut deviance = dof * (ln2pi + sigma2.ln()) + log_det_v + dof;
        if method == Method::Reml {
            let log_det_a: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            deviance += log_det_a;
        }
        Ok(Evaluation {
            deviance,
            beta,
            sigma2,
            xtvx_inv: chol.inverse(),
        })
    }

    /// Derivative of the profiled deviance with respect to `t = theta^2`.
    /// Finite at `t = 0`, where its sign decides whether the boundary is a
    /// local optimum.
    pub fn slope(&self, t: f64, method: Method) -> Result<f64> {
        let Solved { chol, sums, quad, .. } = self.solve(t.sqrt())?;
        let mut dquad = 0.0;
        let mut dlogdet_v = 0.0;
        let mut dlogdet_a = 0.0;
        for ((s, c), &n) in sums.iter().zip(&self.col_sums).zip(&self.sizes) {
            let w = 1.0 / (1.0 + n * t);
            dquad -= (s * w).powi(2);
            dlogdet_v += n * w;
            if method == Method::Reml {
                dlogdet_a -= w * w * c.dot(&chol.solve(c));
            }
        }
        Ok(self.dof(method) * dquad / quad + dlogdet_v + dlogdet_a)
    }
}

struct Solved {
    chol: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    sums: Vec<f64>,
    quad: f64,
    log_det_v: f64,
}

fn equilibrated(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
        let (r, c) = (idx[i], idx[j]);
        a[(r, c)] / (a[(r, r)] * a[(c, c)]).sqrt()
    })
}

fn well_conditioned(a: &DMatrix<f64>, idx: &[usize]) -> bool {
    if idx.iter().any(|&i| !(a[(i, i)] > 0.0)) {
        return false;
    }
    let eig = SymmetricEigen::<f64, Dyn>::new(equilibrated(a, idx));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    min > 0.0 && max / min <= CONDITION_LIMIT
}

/// Fails with the names of columns that are (numerically) linear
/// combinations of earlier columns.
fn check_conditioning(a: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let all: Vec<usize> = (0..a.nrows()).collect();
    if well_conditioned(a, &all) {
        return Ok(());
    }
    let mut kept = Vec::new();
    let mut dependent = Vec::new();
    for j in all {
        kept.push(j);
        if !well_conditioned(a, &kept) {
            kept.pop();
            dependent.push(names[j].clone());
        }
    }
    if dependent.is_empty() {
        dependent = names.to_vec();
    }
    Err(Error::RankDeficient { columns: dependent })
}

/// Profiled deviance at a fixed `theta = sigma_b / sigma`, with `beta` and
/// `sigma^2` at their conditional optima.
///
/// ```text
/// ML:   n log(2 pi s2) + log|V| + n,              s2 = r'V^-1 r / n
/// REML: (n-p) log(2 pi s2) + log|V| + log|X'V^-1X| + (n-p),   s2 = r'V^-1 r / (n-p)
/// ```
pub fn profiled_deviance(
    design: &DesignMatrix,
    y: &[f64],
    theta: f64,
    method: Method,
) -> Result<ProfiledDeviance> {
    let eval = GroupedSums::new(design, y)?.evaluate(theta, method)?;
    Ok(ProfiledDeviance {
        deviance: eval.deviance,
        beta: eval.beta,
        sigma2: eval.sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: &[Vec<f64>], names: &[&str], groups: &[&str]) -> DesignMatrix {
        DesignMatrix::from_rows(
            rows,
            names.iter().map(|s| s.to_string()).collect(),
            true,
            groups,
        )
        .unwrap()
    }

    #[test]
    fn slope_matches_finite_difference() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![1.0, (i * i % 7) as f64]).collect();
        let groups: Vec<String> = (0..12).map(|i| format!("g{}", i % 4)).collect();
        let d = design(&rows, &["(Intercept)", "x"], &groups.iter().map(String::as_str).collect::<Vec<_>>());
        let y: Vec<f64> = (0..12).map(|i| (i % 4) as f64 * 1.5 + (i % 3) as f64 + 0.1 * i as f64).collect();
        let sums = GroupedSums::new(&d, &y).unwrap();
        for method in [Method::Ml, Method::Reml] {
            for t in [0.0, 0.2, 1.0, 4.0] {
                let h = 1e-6;
                let dev = |t: f64| sums.evaluate(f64::sqrt(t), method).unwrap().deviance;
                let fd = if t == 0.0 { (dev(h) - dev(0.0)) / h } else { (dev(t + h) - dev(t - h)) / (2.0 * h) };
                let exact = sums.slope(t, method).unwrap();
                assert!((fd - exact).abs() < 1e-4 * exact.abs().max(1.0), "{method} t={t}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn duplicated_column_is_named() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let v = i as f64 * 0.7 + (i % 3) as f64;
                vec![1.0, v, 2.0 * v]
            })
            .collect();
        let groups = ["a", "a", "b", "b", "c", "c", "d", "d"];
        let d = design(&rows, &["(Intercept)", "x", "x2"], &groups);
        let y: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        match profiled_deviance(&d, &y, 0.5, Method::Reml) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["x2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_theta_rejected() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let d = design(&rows, &["(Intercept)", "x"], &["a", "a", "a", "b", "b", "b"]);
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 6.5];
        assert!(profiled_deviance(&d, &y, -0.1, Method::Ml).is_err());
        assert!(profiled_deviance(&d, &y[..5], 0.1, Method::Ml).is_err());
    }

    #[test]
    fn exact_fit_is_degenerate() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let d = design(&rows, &["(Intercept)", "x"], &["a", "a", "a", "b", "b", "b"]);
        let y: Vec<f64> = (0..6).map(|i| 2.0 + 3.0 * i as f64).collect();
        assert!(matches!(
            profiled_deviance(&d, &y, 0.0, Method::Ml),
            Err(Error::Degenerate(_))
        ));
    }
}

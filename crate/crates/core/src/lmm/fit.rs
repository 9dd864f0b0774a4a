use nalgebra::DVector;
use serde::Serialize;
use statrs::function::erf::erfc;

use super::deviance::{Evaluation, GroupedSums};
use super::optimize::brent_minimize;
use super::{DesignMatrix, Method};
use crate::error::{Error, Result};

/// Upper end of the `theta` search interval.
pub const THETA_MAX: f64 = 1e3;
const THETA_XTOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200;
const GRID_DECADES: (i32, i32) = (-6, 3);
const GRID_PER_DECADE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmmFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p_values: Vec<f64>,
    /// `sigma_b / sigma` at the optimum; 0 means no group-level variance.
    pub theta: f64,
    pub sigma2: f64,
    pub sigma_b2: f64,
    pub loglik: f64,
    pub deviance: f64,
    pub aic: f64,
    pub bic: f64,
    pub r2_marginal: f64,
    pub r2_conditional: f64,
    pub n: usize,
    pub p_fixed: usize,
    pub q: usize,
    pub k_params: usize,
    pub method: Method,
    pub iterations: usize,
}

/// `(aic, bic)` for a log-likelihood with `k_params` estimated parameters
/// and `n` observations.
pub fn information_criteria(loglik: f64, k_params: usize, n: usize) -> (f64, f64) {
    let k = k_params as f64;
    (-2.0 * loglik + 2.0 * k, -2.0 * loglik + k * (n as f64).ln())
}

/// Two-sided normal p-value for a Wald z statistic.
fn wald_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

fn theta_grid() -> Vec<f64> {
    let (lo, hi) = GRID_DECADES;
    let steps = (hi - lo) as usize * GRID_PER_DECADE;
    std::iter::once(0.0)
        .chain((0..=steps).map(|i| 10f64.powf(lo as f64 + i as f64 / GRID_PER_DECADE as f64)))
        .collect()
}

/// Fits the random-intercept model by minimizing the profiled deviance over
/// `theta` in `[0, THETA_MAX]`: a coarse log-spaced scan locates the basin,
/// then Brent's method refines it.
pub fn fit_lmm(design: &DesignMatrix, y: &[f64], method: Method) -> Result<LmmFit> {
    let sizes = design.group_sizes();
    if design.q() < 2 {
        return Err(Error::Unidentifiable(format!(
            "{} group(s); at least 2 are needed",
            design.q()
        )));
    }
    if sizes.iter().all(|&s| s < 2) {
        return Err(Error::Unidentifiable(
            "every group has a single row, so group and residual variance cannot be separated"
                .into(),
        ));
    }
    let sums = GroupedSums::new(design, y)?;
    // Surfaces rank deficiency and exact fits before searching.
    sums.evaluate(0.0, method)?;

    let grid = theta_grid();
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| sums.evaluate(t, method).map_or(f64::INFINITY, |e| e.deviance))
        .collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let hi = grid.get(best + 1).copied().unwrap_or(THETA_MAX).min(THETA_MAX);

    let refined = brent_minimize(
        |t| sums.evaluate(t, method).map_or(f64::INFINITY, |e| e.deviance),
        lo,
        hi,
        THETA_XTOL,
        MAX_ITERATIONS,
    )?;
    let (theta, iterations) = if refined.fx <= values[best] {
        (refined.x, refined.iterations)
    } else {
        (grid[best], refined.iterations)
    };
    // Brent on the deviance resolves theta only to about sqrt(eps); a root
    // of the analytic slope inside the same bracket is accurate to eps.
    let current = sums.evaluate(theta, method)?.deviance;
    let theta = polish(&sums, method, lo, hi)
        .filter(|&t| {
            sums.evaluate(t, method)
                .is_ok_and(|e| e.deviance <= current + 1e-9 * current.abs().max(1.0))
        })
        .unwrap_or(theta);

    let eval = sums.evaluate(theta, method)?;
    Ok(summarize(design, method, theta, iterations, eval))
}

/// Stationary point of the deviance in `[lo, hi]` by bisection on the slope
/// in `t = theta^2`, or 0 when the slope is non-negative at a zero lower end.
fn polish(sums: &GroupedSums<'_>, method: Method, lo: f64, hi: f64) -> Option<f64> {
    let slope = |t: f64| sums.slope(t, method).ok();
    let (mut a, mut b) = (lo * lo, hi * hi);
    let ga = slope(a)?;
    if a == 0.0 && ga >= 0.0 {
        return Some(0.0);
    }
    if !(ga < 0.0 && slope(b)? > 0.0) {
        return None;
    }
    for _ in 0..MAX_ITERATIONS {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some((0.5 * (a + b)).sqrt())
}

fn summarize(
    design: &DesignMatrix,
    method: Method,
    theta: f64,
    iterations: usize,
    eval: Evaluation,
) -> LmmFit {
    let (n, p) = (design.n(), design.p());
    let Evaluation {
        deviance,
        beta,
        sigma2,
        xtvx_inv,
    } = eval;
    let se: Vec<f64> = xtvx_inv
        .diagonal()
        .iter()
        .map(|v| (sigma2 * v).sqrt())
        .collect();
    let z: Vec<f64> = beta
        .iter()
        .zip(&se)
        .map(|(&b, &s)| if b == 0.0 { 0.0 } else { b / s })
        .collect();
    let p_values = z.iter().map(|&z| wald_p(z)).collect();

    let sigma_b2 = theta * theta * sigma2;
    let fitted: DVector<f64> = design.x() * &beta;
    let mean = fitted.mean();
    let var_fixed = fitted.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n as f64;
    let total = var_fixed + sigma_b2 + sigma2;

    let loglik = -0.5 * deviance;
    let k_params = p + 2;
    let (aic, bic) = information_criteria(loglik, k_params, n);
    LmmFit {
        names: design.names().to_vec(),
        beta: beta.iter().copied().collect(),
        se,
        z,
        p_values,
        theta,
        sigma2,
        sigma_b2,
        loglik,
        deviance,
        aic,
        bic,
        r2_marginal: var_fixed / total,
        r2_conditional: (var_fixed + sigma_b2) / total,
        n,
        p_fixed: p,
        q: design.q(),
        k_params,
        method,
        iterations,
    }
}

/// Significance marker: `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub stars: &'static str,
}

impl CoefficientRow {
    pub fn new(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        let z = if estimate == 0.0 { 0.0 } else { estimate / se };
        let p = wald_p(z);
        CoefficientRow {
            name: name.into(),
            estimate,
            se,
            z,
            p,
            stars: stars(p),
        }
    }

    /// Estimate with stars, e.g. `-35.08***`.
    pub fn estimate_cell(&self) -> String {
        format!("{:.2}{}", self.estimate, self.stars)
    }

    /// Standard error in parentheses, e.g. `(4.49)`.
    pub fn se_cell(&self) -> String {
        format!("({:.2})", self.se)
    }
}

pub fn wald_table(fit: &LmmFit) -> Vec<CoefficientRow> {
    fit.names
        .iter()
        .zip(fit.beta.iter().zip(&fit.se))
        .zip(fit.p_values.iter().zip(&fit.z))
        .map(|((name, (&b, &s)), (&p, &z))| CoefficientRow {
            name: name.clone(),
            estimate: b,
            se: s,
            z,
            p,
            stars: stars(p),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_identity_case() {
        let (aic, bic) = information_criteria(0.0, 1, 7);
        assert_eq!(aic, 2.0);
        assert_eq!(bic, 7f64.ln());
        let (aic, bic) = information_criteria(-10.0, 3, 1);
        assert_eq!((aic, bic), (26.0, 20.0));
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0009), "***");
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.0099), "**");
        assert_eq!(stars(0.01), "*");
        assert_eq!(stars(0.049), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn wald_rows() {
        let strong = CoefficientRow::new("log(attention diversity)", -35.08, 4.49);
        assert!((strong.z + 7.8129).abs() < 1e-3);
        assert_eq!(strong.stars, "***");
        assert_eq!(strong.estimate_cell(), "-35.08***");
        assert_eq!(strong.se_cell(), "(4.49)");
        let weak = CoefficientRow::new("cellular", 0.05, 0.06);
        assert!(weak.p > 0.05);
        assert_eq!(weak.estimate_cell(), "0.05");
        let zero = CoefficientRow::new("x", 0.0, 2.0);
        assert_eq!(zero.p, 1.0);
    }

    #[test]
    fn grid_spans_search_interval() {
        let g = theta_grid();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-6).abs() < 1e-18);
        assert!((g.last().unwrap() - THETA_MAX).abs() < 1e-9);
    }
}

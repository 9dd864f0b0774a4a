//! Bounded scalar minimization (Brent: golden section with parabolic steps).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5) / 2

/// Minimizes `f` on `[lo, hi]`.
///
/// Stops when the bracket around the best point is within `xtol`
/// (absolute, plus a 1e-10 relative term).
pub fn brent_minimize<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<Minimum>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut trace = Vec::new();

    for iter in 1..=max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = xtol + 1e-10 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(Minimum {
                x,
                fx,
                iterations: iter - 1,
                trace,
            });
        }

        let mut golden = true;
        if e.abs() > tol1 {
            // Try a parabolic fit through x, w, v.
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);

        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
        trace.push(fx);
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        trace: trace.iter().rev().take(10).rev().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let m = brent_minimize(|x| (x - 1.234).powi(2) + 3.0, 0.0, 10.0, 1e-10, 200).unwrap();
        assert!((m.x - 1.234).abs() < 1e-8, "{}", m.x);
        assert!((m.fx - 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_minimum() {
        let m = brent_minimize(|x| x, 0.0, 1.0, 1e-9, 200).unwrap();
        assert!(m.x < 1e-8);
    }

    #[test]
    fn non_smooth_objective() {
        let m = brent_minimize(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-9, 200).unwrap();
        assert!((m.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn iteration_cap_reports_trace() {
        match brent_minimize(|x: f64| x.sin(), 0.0, 6.0, 1e-12, 3) {
            Err(Error::NonConvergence { iterations, trace }) => {
                assert_eq!(iterations, 3);
                assert_eq!(trace.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

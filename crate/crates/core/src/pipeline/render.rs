use std::fmt::Write as _;

use super::ModelResult;
use crate::stats::ScatterPoint;

const LABEL_WIDTH: usize = 28;
const CELL_WIDTH: usize = 14;

fn row(out: &mut String, label: &str, cells: &[String]) {
    let _ = write!(out, "{label:<LABEL_WIDTH$}");
    for c in cells {
        let _ = write!(out, "{c:>CELL_WIDTH$}");
    }
    out.push('\n');
}

/// Model comparison table: one column per model, estimates with stars and
/// standard errors below, then fit statistics.
pub fn render_table1(models: &[ModelResult]) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for m in models {
        for c in &m.coefficients {
            if !labels.contains(&c.name.as_str()) {
                labels.push(&c.name);
            }
        }
    }
    let width = LABEL_WIDTH + CELL_WIDTH * models.len();
    let mut out = String::new();
    let names: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
    out.push_str(&"=".repeat(width));
    out.push('\n');
    row(&mut out, "", &names);
    out.push_str(&"-".repeat(width));
    out.push('\n');

    for label in labels {
        let find = |m: &ModelResult| m.coefficients.iter().find(|c| c.name == label).cloned();
        let est: Vec<String> = models
            .iter()
            .map(|m| find(m).map(|c| c.estimate_cell()).unwrap_or_default())
            .collect();
        let se: Vec<String> = models
            .iter()
            .map(|m| find(m).map(|c| c.se_cell()).unwrap_or_default())
            .collect();
        row(&mut out, label, &est);
        row(&mut out, "", &se);
    }
    out.push_str(&"-".repeat(width));
    out.push('\n');

    let stat = |f: &dyn Fn(&ModelResult) -> Option<String>| -> Vec<String> {
        models
            .iter()
            .map(|m| f(m).unwrap_or_else(|| if m.error.is_some() { "failed".into() } else { String::new() }))
            .collect()
    };
    let fit2 = |g: fn(&crate::lmm::LmmFit) -> f64| {
        move |m: &ModelResult| m.fit.as_ref().map(|f| format!("{:.2}", g(f)))
    };
    row(&mut out, "Marginal R^2", &stat(&fit2(|f| f.r2_marginal)));
    row(&mut out, "Conditional R^2", &stat(&fit2(|f| f.r2_conditional)));
    row(&mut out, "AIC", &stat(&fit2(|f| f.aic)));
    row(&mut out, "BIC", &stat(&fit2(|f| f.bic)));
    row(&mut out, "Log Likelihood", &stat(&fit2(|f| f.loglik)));
    row(&mut out, "Num. obs.", &stat(&|m| m.fit.as_ref().map(|f| f.n.to_string())));
    row(&mut out, "Num. groups", &stat(&|m| m.fit.as_ref().map(|f| f.q.to_string())));
    row(&mut out, "Var: group (Intercept)", &stat(&fit2(|f| f.sigma_b2)));
    row(&mut out, "Var: Residual", &stat(&fit2(|f| f.sigma2)));
    row(
        &mut out,
        "Max VIF",
        &stat(&|m| {
            m.fit.as_ref().map(|_| {
                m.vif
                    .as_ref()
                    .map_or_else(|| "-".to_string(), |v| format!("{:.2}", v.max()))
            })
        }),
    );
    out.push_str(&"=".repeat(width));
    out.push('\n');
    out.push_str("***p<0.001, **p<0.01, *p<0.05\n");
    if let Some(m) = models.first() {
        let _ = writeln!(out, "Random intercept by {}; {} estimates.", m.grouping, m.method);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Labelled scatter of PFI against log diversity.
pub fn scatter_svg(points: &[ScatterPoint], title: &str) -> String {
    let (w, h) = (800.0, 600.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 60.0);
    let span = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(points.iter().map(|p| p.log_u).collect());
    let (y0, y1) = span(points.iter().map(|p| p.pfi).collect());
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, h - bottom);
    for t in ticks(x0, x1, 5) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle" font-size="11">{t:.2}</text>"#,
            h - bottom,
            h - bottom + 5.0,
            h - bottom + 18.0
        );
    }
    for t in ticks(y0, y1, 5) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end" font-size="11">{t:.1}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">log(attention diversity)</text>"#,
        (left + w - right) / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">press freedom index</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    for p in points {
        let (x, y) = (sx(p.log_u), sy(p.pfi));
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="steelblue"/><text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#,
            x + 4.0,
            y - 3.0,
            escape(p.country.as_str())
        );
    }
    s.push_str("</svg>\n");
    s
}

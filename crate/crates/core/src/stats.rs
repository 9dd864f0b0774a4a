//! Correlation between diversity and the press freedom index, and
//! multicollinearity diagnostics.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::CountryCode;
use crate::diversity::DiversityRecord;
use crate::error::{Error, Result};
use crate::lmm::DesignMatrix;

/// Per-country indicators. A row with `window_start` set carries values for
/// one panel window only; rows without it describe the country as a whole.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountryIndicators {
    pub country: CountryCode,
    /// Lower is freer.
    pub pfi: Option<f64>,
    pub cellular_per_100: Option<f64>,
    pub gdp_per_capita: Option<f64>,
    pub population: Option<f64>,
    pub unemployment_pct: Option<f64>,
    pub region: Option<String>,
    pub window_start: Option<NaiveDate>,
}

impl CountryIndicators {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::Validation(format!("{}: {what} = {v}", self.country)))
        };
        if let Some(v) = self.pfi {
            if !(v >= 0.0) {
                return bad("pfi must be >= 0", v);
            }
        }
        if let Some(v) = self.gdp_per_capita {
            if !(v > 0.0) {
                return bad("gdp_per_capita must be > 0", v);
            }
        }
        if let Some(v) = self.population {
            if !(v > 0.0) {
                return bad("population must be > 0", v);
            }
        }
        if let Some(v) = self.unemployment_pct {
            if !(0.0..=100.0).contains(&v) {
                return bad("unemployment_pct must be within [0, 100]", v);
            }
        }
        if let Some(v) = self.cellular_per_100 {
            if !v.is_finite() {
                return bad("cellular_per_100 must be finite", v);
            }
        }
        Ok(())
    }
}

const INDICATOR_COLUMNS: [&str; 6] = [
    "country",
    "pfi",
    "cellular_per_100",
    "gdp_per_capita",
    "population",
    "unemployment_pct",
];

/// Reads the indicators CSV. The six standard columns are required;
/// `region` and `window_start` are optional. Empty cells are missing values.
pub fn read_indicators<R: Read>(input: R) -> Result<Vec<CountryIndicators>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let mut index = HashMap::new();
    for name in INDICATOR_COLUMNS {
        let i = position(name)
            .ok_or_else(|| Error::Validation(format!("indicators CSV lacks column {name:?}")))?;
        index.insert(name, i);
    }
    let region = position("region");
    let window = position("window_start");

    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| record.get(i).filter(|s| !s.is_empty());
        let number = |name: &str| -> Result<Option<f64>> {
            cell(index[name])
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        Error::Validation(format!(
                            "indicators row {}: {name} = {s:?} is not a number",
                            line + 2
                        ))
                    })
                })
                .transpose()
        };
        let row = CountryIndicators {
            country: CountryCode::new(cell(index["country"]).unwrap_or(""))?,
            pfi: number("pfi")?,
            cellular_per_100: number("cellular_per_100")?,
            gdp_per_capita: number("gdp_per_capita")?,
            population: number("population")?,
            unemployment_pct: number("unemployment_pct")?,
            region: region.and_then(cell).map(str::to_string),
            window_start: window
                .and_then(cell)
                .map(|s| {
                    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| {
                        Error::Validation(format!("indicators row {}: window_start: {e}", line + 2))
                    })
                })
                .transpose()?,
        };
        row.validate()?;
        out.push(row);
    }
    Ok(out)
}

pub fn load_indicators(path: impl AsRef<Path>) -> Result<Vec<CountryIndicators>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_indicators(file)
}

pub fn write_indicators<W: Write>(rows: &[CountryIndicators], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = INDICATOR_COLUMNS.to_vec();
    header.extend(["region", "window_start"]);
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.country.to_string(),
            num(r.pfi),
            num(r.cellular_per_100),
            num(r.gdp_per_capita),
            num(r.population),
            num(r.unemployment_pct),
            r.region.clone().unwrap_or_default(),
            r.window_start.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::Shape(format!("need at least 3 pairs, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("a variable has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided Fisher-z interval `tanh(atanh(r) +/- z_{(1+level)/2} / sqrt(n - 3))`.
pub fn fisher_ci(r: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if !(r.abs() < 1.0) {
        return Err(Error::Degenerate(format!("|r| = {} gives a degenerate interval", r.abs())));
    }
    if n < 4 {
        return Err(Error::Validation(format!("need n >= 4 for a Fisher interval, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!("level must be in (0, 1), got {level}")));
    }
    let z = normal_quantile((1.0 + level) / 2.0);
    let half = z / ((n - 3) as f64).sqrt();
    let center = r.atanh();
    Ok(((center - half).tanh(), (center + half).tanh()))
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub k: usize,
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedK {
    pub k: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub results: Vec<CorrelationResult>,
    pub skipped: Vec<SkippedK>,
}

/// Scale on which diversity enters the correlation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum DiversityScale {
    /// Natural log of `U`, matching the regression term and the scatter plot.
    #[default]
    Log,
    Linear,
}

impl DiversityScale {
    fn apply(self, u: f64) -> f64 {
        match self {
            DiversityScale::Log => u.ln(),
            DiversityScale::Linear => u,
        }
    }
}

impl std::str::FromStr for DiversityScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log" => Ok(DiversityScale::Log),
            "linear" => Ok(DiversityScale::Linear),
            other => Err(Error::Validation(format!("scale must be log or linear, got {other:?}"))),
        }
    }
}

/// Country-level PFI (rows without a window).
pub fn country_pfi(indicators: &[CountryIndicators]) -> BTreeMap<&CountryCode, f64> {
    indicators
        .iter()
        .filter(|i| i.window_start.is_none())
        .filter_map(|i| i.pfi.map(|p| (&i.country, p)))
        .collect()
}

/// (country, U, PFI) for the topic-level records at `k`, PFI-less countries dropped.
fn pairs<'a>(
    records: &'a [DiversityRecord],
    pfi: &BTreeMap<&CountryCode, f64>,
    k: usize,
) -> Result<Vec<(&'a CountryCode, f64, f64)>> {
    let mut seen = BTreeMap::new();
    for r in records.iter().filter(|r| r.k == k && r.l.is_none()) {
        if seen.insert(&r.country, r).is_some() {
            return Err(Error::Validation(format!(
                "several diversity records for {} at k = {k}; correlate full-period values",
                r.country
            )));
        }
    }
    Ok(seen
        .into_iter()
        .filter_map(|(c, r)| pfi.get(c).map(|&p| (c, r.value as f64, p)))
        .collect())
}

/// Pearson r between `U^c(k)` (on `scale`) and PFI for each `k`, over
/// countries that have both. A `k` with fewer than 3 such countries or a
/// constant variable is skipped, not fatal.
pub fn correlation_sweep(
    records: &[DiversityRecord],
    indicators: &[CountryIndicators],
    ks: &[usize],
    level: f64,
    scale: DiversityScale,
) -> Result<SweepOutcome> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!("level must be in (0, 1), got {level}")));
    }
    let pfi = country_pfi(indicators);
    let mut outcome = SweepOutcome::default();
    for &k in ks {
        let pts = pairs(records, &pfi, k)?;
        let skip = |reason: String| {
            log::warn!("correlation at k = {k} skipped: {reason}");
            SkippedK { k, reason }
        };
        if pts.len() < 3 {
            outcome
                .skipped
                .push(skip(format!("{} countries with both diversity and PFI", pts.len())));
            continue;
        }
        let xs: Vec<f64> = pts.iter().map(|p| scale.apply(p.1)).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let r = match pearson_r(&xs, &ys) {
            Ok(r) => r,
            Err(e) => {
                outcome.skipped.push(skip(e.to_string()));
                continue;
            }
        };
        let n = pts.len();
        let (ci_low, ci_high) = if r.abs() >= 1.0 {
            (r, r)
        } else if n < 4 {
            (-1.0, 1.0)
        } else {
            fisher_ci(r, n, level)?
        };
        outcome.results.push(CorrelationResult {
            k,
            r,
            ci_low,
            ci_high,
            n,
            level,
        });
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub country: CountryCode,
    pub u: usize,
    pub log_u: f64,
    pub pfi: f64,
}

/// Points for a diversity-vs-PFI scatter plot at one `k`.
pub fn scatter_points(
    records: &[DiversityRecord],
    indicators: &[CountryIndicators],
    k: usize,
) -> Result<Vec<ScatterPoint>> {
    let pfi = country_pfi(indicators);
    Ok(pairs(records, &pfi, k)?
        .into_iter()
        .map(|(c, u, p)| ScatterPoint {
            country: c.clone(),
            u: u as usize,
            log_u: u.ln(),
            pfi: p,
        })
        .collect())
}

pub fn write_correlation_csv<W: Write>(results: &[CorrelationResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "r", "ci_low", "ci_high", "n"])?;
    for r in results {
        w.write_record([
            r.k.to_string(),
            format!("{:.6}", r.r),
            format!("{:.6}", r.ci_low),
            format!("{:.6}", r.ci_high),
            r.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_scatter_csv<W: Write>(points: &[ScatterPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "log_u", "pfi"])?;
    for p in points {
        w.write_record([p.country.to_string(), format!("{:.6}", p.log_u), p.pfi.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VifEntry {
    pub name: String,
    /// `+inf` under exact collinearity.
    pub vif: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VifReport {
    pub entries: Vec<VifEntry>,
    /// Columns explained exactly by the others.
    pub collinear: Vec<String>,
}

impl VifReport {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.vif).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `1 / (1 - R_j^2)` per non-intercept column, with `R_j^2` from an OLS fit
/// of column `j` on an intercept and the remaining columns.
pub fn vif(design: &DesignMatrix) -> Result<VifReport> {
    let predictors: Vec<(&str, DVector<f64>)> = design.predictors().collect();
    let m = predictors.len();
    let n = design.n();
    if m < 2 {
        return Err(Error::Validation(format!(
            "VIF needs at least 2 predictors, got {m}"
        )));
    }
    if n < m + 2 {
        return Err(Error::InsufficientData(format!("{n} rows for {m} predictors plus intercept")));
    }

    let mut entries = Vec::with_capacity(m);
    let mut collinear = Vec::new();
    for (j, (name, target)) in predictors.iter().enumerate() {
        let mean = target.mean();
        let sst: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
        let others = DMatrix::from_fn(n, m, |i, c| {
            if c == 0 {
                1.0
            } else {
                let col = if c <= j { c - 1 } else { c };
                predictors[col].1[i]
            }
        });
        let svd = others.clone().svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let coef = svd
            .solve(target, cutoff)
            .map_err(|e| Error::Degenerate(format!("VIF regression for {name}: {e}")))?;
        let resid = target - &others * coef;
        let sse = resid.norm_squared();
        let unexplained = if sst > 0.0 { sse / sst } else { 0.0 };
        let value = if unexplained <= 1e-10 {
            collinear.push(name.to_string());
            f64::INFINITY
        } else {
            1.0 / unexplained
        };
        entries.push(VifEntry {
            name: name.to_string(),
            vif: value,
        });
    }
    if !collinear.is_empty() {
        log::warn!("exactly collinear columns: {}", collinear.join(", "));
    }
    Ok(VifReport { entries, collinear })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let xs = [1.0, 2.0, 3.0, 5.0, 8.0];
        let up: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson_r(&xs, &up).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&xs, &down).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_r() {
        // centered: x = (-1.5,-0.5,0.5,1.5), y = (-0.5,-1.5,1.5,0.5)
        // sxy = 0.75+0.75+0.75+0.75 = 3, sxx = syy = 5, r = 3/5
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(
            pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fisher_null_interval() {
        let (lo, hi) = fisher_ci(0.0, 103, 0.95).unwrap();
        let expected = (normal_quantile(0.975) / 10.0).tanh();
        assert!((hi - expected).abs() < 1e-15);
        assert!((lo + expected).abs() < 1e-15);
        assert!((hi - 0.1935).abs() < 5e-5);
        assert!(fisher_ci(1.0, 50, 0.95).is_err());
        assert!(fisher_ci(0.5, 3, 0.95).is_err());
        assert!(fisher_ci(0.5, 30, 1.0).is_err());
    }

    #[test]
    fn fisher_widens_for_small_n() {
        let small = fisher_ci(-0.4, 20, 0.95).unwrap();
        let large = fisher_ci(-0.4, 200, 0.95).unwrap();
        assert!(small.0 < large.0 && large.1 < small.1);
    }

    #[test]
    fn indicators_csv_round_trip() {
        let csv = "country,pfi,cellular_per_100,gdp_per_capita,population,unemployment_pct,region\n\
                   FI,8.59,135.5,43000,5500000,8.8,north\n\
                   KP,83.76,,,25000000,,east\n";
        let rows = read_indicators(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].pfi, Some(8.59));
        assert_eq!(rows[1].gdp_per_capita, None);
        assert_eq!(rows[1].region.as_deref(), Some("east"));
        let mut buf = Vec::new();
        write_indicators(&rows, &mut buf).unwrap();
        assert_eq!(read_indicators(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn indicators_validation() {
        let missing = "country,pfi\nFI,8.59\n";
        assert!(read_indicators(missing.as_bytes()).is_err());
        let header = "country,pfi,cellular_per_100,gdp_per_capita,population,unemployment_pct\n";
        assert!(read_indicators(format!("{header}FI,8,100,0,5,5\n").as_bytes()).is_err());
        assert!(read_indicators(format!("{header}FI,-1,100,1,5,5\n").as_bytes()).is_err());
        assert!(read_indicators(format!("{header}FI,abc,100,1,5,5\n").as_bytes()).is_err());
    }

    fn design(cols: &[Vec<f64>]) -> DesignMatrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| std::iter::once(1.0).chain(cols.iter().map(|c| c[i])).collect())
            .collect();
        let names = std::iter::once("(Intercept)".to_string())
            .chain((0..cols.len()).map(|j| format!("x{j}")))
            .collect();
        let groups: Vec<String> = (0..n).map(|i| (i % 2).to_string()).collect();
        DesignMatrix::from_rows(&rows, names, true, &groups).unwrap()
    }

    #[test]
    fn orthogonal_columns_have_unit_vif() {
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let c = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let report = vif(&design(&[a, b, c])).unwrap();
        for e in &report.entries {
            assert!((e.vif - 1.0).abs() < 1e-9, "{e:?}");
        }
    }

    #[test]
    fn duplicated_column_is_infinite() {
        let a: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64).collect();
        let report = vif(&design(&[a.clone(), b, a])).unwrap();
        assert!(report.entries[0].vif.is_infinite());
        assert!(report.entries[2].vif.is_infinite());
        assert!(report.entries[1].vif.is_finite());
        assert_eq!(report.collinear, vec!["x0".to_string(), "x2".to_string()]);
    }
}

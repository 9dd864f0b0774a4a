//! Stage wiring: configuration, the diversity/indicator join, model fitting
//! and the report bundle.

mod render;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CountryCode, Corpus};
use crate::diversity::{diversity_table, DateWindow, DiversityRecord, WindowSpec, DEFAULT_L};
use crate::error::{Error, Result};
use crate::filter::{build_topk_dataset, survival_curve, TopK};
use crate::frame::{Frame, FrameRow, Grouping};
use crate::lmm::{build_design, fit_lmm, wald_table, CoefficientRow, LmmFit, LmmSpec, Method};
use crate::stats::{vif, CountryIndicators, DiversityScale, VifReport};

pub use render::{render_table1, scatter_svg};
pub use report::{run_report, Manifest, ReportOutcome, StageRecord, StageStatus};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub snapshots: PathBuf,
    pub indicators: Option<PathBuf>,
    pub k: TopK,
    pub l: usize,
    pub windows: WindowSpec,
    /// Reference models to fit, from {1, 2, 3}.
    pub models: Vec<u8>,
    /// Extra `response ~ terms` formulas.
    pub formulas: Vec<String>,
    /// `None` picks region for a single window and country for panels.
    pub grouping: Option<Grouping>,
    pub method: Method,
    pub out: PathBuf,
    pub level: f64,
    /// `k` values of the correlation sweep.
    pub ks: Vec<usize>,
    pub scale: DiversityScale,
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            snapshots: PathBuf::from("snapshots"),
            indicators: None,
            k: TopK::new(90).expect("valid k"),
            l: DEFAULT_L,
            windows: WindowSpec::Full,
            models: vec![1, 2, 3],
            formulas: Vec::new(),
            grouping: None,
            method: Method::Reml,
            out: PathBuf::from("report"),
            level: 0.95,
            ks: (1..=20).map(|i| 5 * i).collect(),
            scale: DiversityScale::Log,
            seed: None,
        }
    }
}

/// Keys accepted in a config file; all optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub snapshots: Option<PathBuf>,
    pub indicators: Option<PathBuf>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub windows: Option<String>,
    pub models: Option<Vec<u8>>,
    pub formulas: Option<Vec<String>>,
    pub grouping: Option<String>,
    pub method: Option<String>,
    pub out: Option<PathBuf>,
    pub level: Option<f64>,
    pub ks: Option<Vec<usize>>,
    pub scale: Option<String>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigFile::parse(&text)
    }
}

impl PipelineConfig {
    /// Defaults overridden by the keys present in `file`. Relative paths
    /// resolve against `base` (normally the config file's directory).
    pub fn from_file(file: &ConfigFile, base: Option<&Path>) -> Result<Self> {
        let resolve = |p: &PathBuf| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.clone(),
        };
        let mut c = PipelineConfig::default();
        if let Some(p) = &file.snapshots {
            c.snapshots = resolve(p);
        }
        if let Some(p) = &file.indicators {
            c.indicators = Some(resolve(p));
        }
        if let Some(k) = file.k {
            c.k = TopK::new(k)?;
        }
        if let Some(l) = file.l {
            c.l = l;
        }
        if let Some(w) = &file.windows {
            c.windows = w.parse()?;
        }
        if let Some(m) = &file.models {
            c.models = m.clone();
        }
        if let Some(f) = &file.formulas {
            c.formulas = f.clone();
        }
        if let Some(g) = &file.grouping {
            c.grouping = Some(g.parse()?);
        }
        if let Some(m) = &file.method {
            c.method = m.parse()?;
        }
        if let Some(p) = &file.out {
            c.out = resolve(p);
        }
        if let Some(l) = file.level {
            c.level = l;
        }
        if let Some(ks) = &file.ks {
            c.ks = ks.clone();
        }
        if let Some(s) = &file.scale {
            c.scale = s.parse()?;
        }
        c.seed = file.seed;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::Validation("l must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Validation(format!("level must be in (0, 1), got {}", self.level)));
        }
        if let Some(m) = self.models.iter().find(|m| !(1..=3).contains(*m)) {
            return Err(Error::Validation(format!("model must be 1, 2 or 3, got {m}")));
        }
        for &k in &self.ks {
            TopK::new(k)?;
        }
        Ok(())
    }

    pub fn grouping(&self) -> Grouping {
        self.grouping.unwrap_or(match self.windows {
            WindowSpec::Full => Grouping::Region,
            _ => Grouping::Country,
        })
    }

    /// Model specs in report order: reference models, then formulas.
    pub fn specs(&self) -> Result<Vec<(String, LmmSpec)>> {
        let grouping = self.grouping();
        let mut out = Vec::new();
        for &m in &self.models {
            out.push((format!("Model {m}"), LmmSpec::model(m, grouping, self.method)?));
        }
        for (i, f) in self.formulas.iter().enumerate() {
            out.push((
                format!("Custom {}", i + 1),
                LmmSpec::parse_formula(f, grouping, self.method)?,
            ));
        }
        Ok(out)
    }
}

/// Window spanning the first to the last observed day.
pub fn full_window(corpus: &Corpus) -> Result<DateWindow> {
    match corpus.date_range() {
        Some((a, b)) => DateWindow::new(a, b),
        None => Err(Error::Validation("corpus has no snapshots".into())),
    }
}

/// Topic-level diversity at `k` over the windows of `spec`.
pub fn windowed_diversity(corpus: &Corpus, k: TopK, spec: &WindowSpec) -> Result<Vec<DiversityRecord>> {
    let windows = match spec {
        WindowSpec::Full => vec![full_window(corpus)?],
        _ => {
            let days: Vec<_> = corpus.days().iter().copied().collect();
            spec.partition(&days)
        }
    };
    diversity_table(&build_topk_dataset(corpus, k), None, &windows)
}

/// `k,count` for each `k`.
pub fn write_survival_csv<W: Write>(corpus: &Corpus, ks: &[TopK], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "count"])?;
    for (k, n) in survival_curve(corpus, ks) {
        w.write_record([k.get().to_string(), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct JoinReport {
    pub rows: usize,
    /// Diversity keys with no indicator row for the country.
    pub no_indicators: Vec<String>,
    /// Diversity keys whose country (or window) has no PFI.
    pub missing_pfi: Vec<String>,
    /// Countries with indicators but no diversity record.
    pub unused_indicators: Vec<String>,
    pub panel: bool,
}

impl JoinReport {
    pub fn dropped(&self) -> usize {
        self.no_indicators.len() + self.missing_pfi.len()
    }
}

/// Inner join of diversity records with indicators on country, and on
/// window start as well when the records span several windows and the
/// indicators carry per-window rows. Per-window values override the
/// country-level row; missing ones fall back to it. Rows without a PFI are
/// dropped and reported.
pub fn join_frame(
    records: &[DiversityRecord],
    indicators: &[CountryIndicators],
) -> Result<(Frame, JoinReport)> {
    if records.is_empty() || indicators.is_empty() {
        return Err(Error::Validation("join needs non-empty diversity and indicator inputs".into()));
    }
    let first = &records[0];
    if records.iter().any(|r| r.k != first.k || r.l != first.l) {
        return Err(Error::Validation(
            "diversity records for the join must share one k and one l".into(),
        ));
    }
    let windows: BTreeSet<_> = records.iter().map(|r| r.window).collect();
    let panel = windows.len() > 1;

    let mut country_rows: BTreeMap<&CountryCode, &CountryIndicators> = BTreeMap::new();
    let mut window_rows = BTreeMap::new();
    for ind in indicators {
        match ind.window_start {
            None => {
                if country_rows.insert(&ind.country, ind).is_some() {
                    return Err(Error::Validation(format!(
                        "indicators list {} more than once",
                        ind.country
                    )));
                }
            }
            Some(start) => {
                window_rows.insert((&ind.country, start), ind);
            }
        }
    }

    let mut report = JoinReport {
        panel,
        ..JoinReport::default()
    };
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for r in records {
        seen.insert(&r.country);
        let key = if panel {
            format!("{}@{}", r.country, r.window.start)
        } else {
            r.country.to_string()
        };
        let base = country_rows.get(&r.country).copied();
        let win = panel
            .then(|| window_rows.get(&(&r.country, r.window.start)).copied())
            .flatten();
        if base.is_none() && win.is_none() {
            report.no_indicators.push(key);
            continue;
        }
        let pick = |f: fn(&CountryIndicators) -> Option<f64>| {
            win.and_then(f).or_else(|| base.and_then(f))
        };
        let pfi = pick(|i| i.pfi);
        if pfi.is_none() {
            report.missing_pfi.push(key);
            continue;
        }
        rows.push(FrameRow {
            country: r.country.clone(),
            window: panel.then_some(r.window),
            region: win
                .and_then(|i| i.region.clone())
                .or_else(|| base.and_then(|i| i.region.clone())),
            u: Some(r.value as f64),
            pfi,
            cellular_per_100: pick(|i| i.cellular_per_100),
            gdp_per_capita: pick(|i| i.gdp_per_capita),
            population: pick(|i| i.population),
            unemployment_pct: pick(|i| i.unemployment_pct),
        });
    }
    report.unused_indicators = country_rows
        .keys()
        .filter(|c| !seen.contains(*c))
        .map(|c| c.to_string())
        .collect();
    report.rows = rows.len();
    if rows.is_empty() {
        let mut unmatched = report.no_indicators.clone();
        unmatched.extend(report.missing_pfi.iter().cloned());
        return Err(Error::EmptyJoin { unmatched });
    }
    if report.dropped() > 0 {
        log::warn!(
            "join dropped {} row(s): {} without indicators, {} without PFI",
            report.dropped(),
            report.no_indicators.len(),
            report.missing_pfi.len()
        );
    }
    Ok((Frame { rows }, report))
}

/// Outcome of one model in the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelResult {
    pub name: String,
    pub formula: String,
    pub grouping: Grouping,
    pub method: Method,
    pub dropped_rows: usize,
    pub fit: Option<LmmFit>,
    /// Coefficient rows labelled for the table.
    pub coefficients: Vec<CoefficientRow>,
    pub vif: Option<VifReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub error_kind: Option<crate::error::ErrorKind>,
}

/// Fits one model on `frame`; VIFs are computed for designs with at least
/// two predictors.
pub fn fit_model(frame: &Frame, name: &str, spec: &LmmSpec) -> ModelResult {
    let mut result = ModelResult {
        name: name.to_string(),
        formula: spec.formula(),
        grouping: spec.grouping,
        method: spec.method,
        dropped_rows: 0,
        fit: None,
        coefficients: Vec::new(),
        vif: None,
        error: None,
        error_kind: None,
    };
    let outcome = build_design(frame, spec).and_then(|built| {
        result.dropped_rows = built.dropped;
        let fit = fit_lmm(&built.design, &built.y, spec.method)?;
        let vif = if built.design.predictors().count() >= 2 {
            Some(vif(&built.design)?)
        } else {
            None
        };
        let mut rows = wald_table(&fit);
        for (row, label) in rows.iter_mut().zip(&built.labels) {
            row.name = label.clone();
        }
        Ok((fit, rows, vif))
    });
    match outcome {
        Ok((fit, rows, vif)) => {
            result.fit = Some(fit);
            result.coefficients = rows;
            result.vif = vif;
        }
        Err(e) => {
            log::error!("{name} failed: {e}");
            result.error_kind = Some(e.kind());
            result.error = Some(e.to_string());
        }
    }
    result
}

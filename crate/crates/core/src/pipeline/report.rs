use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{fit_model, full_window, join_frame, windowed_diversity, render_table1, scatter_svg, write_survival_csv, JoinReport};
use super::{ModelResult, PipelineConfig};
use crate::corpus::{corpus_summary, load_corpus_with_report, Corpus, LoadReport};
use crate::diversity::{diversity_table, write_diversity_csv, DiversityRecord, WindowSpec};
use crate::error::{Error, ErrorKind, Result};
use crate::filter::{build_topk_dataset, TopK};
use crate::stats::{
    correlation_sweep, load_indicators, scatter_points, write_correlation_csv, write_scatter_csv,
    CorrelationResult, CountryIndicators, SkippedK,
};
use crate::synthetic::is_synthetic;

/// `k` values whose diversity distributions are always written.
const DISTRIBUTION_KS: [usize; 3] = [10, 50, 90];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
    #[serde(skip)]
    pub kind: Option<ErrorKind>,
    /// Files written by the stage, relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusFacts {
    pub countries: usize,
    pub observed_days: usize,
    pub snapshots: usize,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
    pub files: usize,
    pub duplicates: usize,
    pub unknown_countries: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    /// Inputs carry the synthetic-fixture marker.
    pub synthetic: bool,
    /// Every stage succeeded.
    pub complete: bool,
    pub config: PipelineConfig,
    pub corpus: Option<CorpusFacts>,
    pub join: Option<JoinReport>,
    pub skipped_ks: Vec<SkippedK>,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOutcome {
    pub manifest: Manifest,
    pub survival: Vec<(usize, usize)>,
    pub correlations: Vec<CorrelationResult>,
    pub models: Vec<ModelResult>,
}

impl ReportOutcome {
    pub fn success(&self) -> bool {
        self.manifest.complete
    }

    /// First failed stage with its error class and message.
    pub fn failure(&self) -> Option<(&str, ErrorKind, &str)> {
        self.manifest
            .stages
            .iter()
            .find(|s| s.status == StageStatus::Failed)
            .map(|s| {
                (
                    s.name.as_str(),
                    s.kind.unwrap_or(ErrorKind::Computation),
                    s.error.as_deref().unwrap_or(""),
                )
            })
    }
}

struct Stages {
    records: Vec<StageRecord>,
}

impl Stages {
    fn run<T>(&mut self, name: &str, f: impl FnOnce(&mut Vec<String>) -> Result<T>) -> Option<T> {
        let mut outputs = Vec::new();
        let result = f(&mut outputs);
        let (status, error, kind, value) = match result {
            Ok(v) => (StageStatus::Ok, None, None, Some(v)),
            Err(e) => {
                log::error!("stage {name} failed: {e}");
                (StageStatus::Failed, Some(e.to_string()), Some(e.kind()), None)
            }
        };
        self.records.push(StageRecord {
            name: name.to_string(),
            status,
            error,
            kind,
            outputs,
        });
        value
    }

    fn fail(&mut self, name: &str, error: Error) {
        self.run::<()>(name, |_| Err(error));
    }

    fn skip(&mut self, name: &str, reason: &str) {
        self.records.push(StageRecord {
            name: name.to_string(),
            status: StageStatus::Skipped,
            error: Some(reason.to_string()),
            kind: None,
            outputs: Vec::new(),
        });
    }
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(BufWriter::new(file))
}

fn write_text(dir: &Path, name: &str, text: &str, outputs: &mut Vec<String>) -> Result<()> {
    let mut w = create(dir, name, outputs)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(dir.join(name), e))
}

struct DiversityOutputs {
    /// Full-period topic-level records per `k`.
    full: BTreeMap<usize, Vec<DiversityRecord>>,
    /// Records at the configured `k` over the configured windows.
    windowed: Vec<DiversityRecord>,
}

fn diversity_stage(
    corpus: &Corpus,
    config: &PipelineConfig,
    outputs: &mut Vec<String>,
) -> Result<DiversityOutputs> {
    let full_window = full_window(corpus)?;
    let distribution: BTreeSet<usize> =
        DISTRIBUTION_KS.iter().copied().chain([config.k.get()]).collect();
    let all_ks: BTreeSet<usize> = distribution.iter().chain(&config.ks).copied().collect();

    let mut full = BTreeMap::new();
    for &k in &all_ks {
        let ds = build_topk_dataset(corpus, TopK::new(k)?);
        let records = diversity_table(&ds, None, &[full_window])?;
        if distribution.contains(&k) {
            write_diversity_csv(&records, create(&config.out, &format!("diversity_k{k}.csv"), outputs)?)?;
            let sub = diversity_table(&ds, Some(config.l), &[full_window])?;
            let name = format!("subtopic_diversity_k{k}_l{}.csv", config.l);
            write_diversity_csv(&sub, create(&config.out, &name, outputs)?)?;
            let bare: usize = sub.iter().map(|r| r.bare_topics).sum();
            if bare > 0 {
                log::info!("k = {k}: {bare} subtopic keys stand for topics without co-mentions");
            }
        }
        full.insert(k, records);
    }

    let windowed = if config.windows == WindowSpec::Full {
        full[&config.k.get()].clone()
    } else {
        let records = windowed_diversity(corpus, config.k, &config.windows)?;
        write_diversity_csv(&records, create(&config.out, "diversity_windows.csv", outputs)?)?;
        records
    };
    Ok(DiversityOutputs { full, windowed })
}

fn facts(corpus: &Corpus, load: &LoadReport) -> CorpusFacts {
    let summary = corpus_summary(corpus);
    CorpusFacts {
        countries: summary.countries,
        observed_days: summary.days,
        snapshots: summary.snapshots,
        first_date: summary.first_date.map(|d| d.to_string()),
        last_date: summary.last_date.map(|d| d.to_string()),
        files: load.files,
        duplicates: load.duplicates,
        unknown_countries: load.unknown_countries.clone(),
    }
}

/// Runs every stage in order, writing outputs under `config.out`. A failed
/// stage does not stop independent later stages; the manifest records what
/// completed. Only a failure to create the output directory or to write the
/// manifest is returned as an error.
pub fn run_report(config: &PipelineConfig) -> Result<ReportOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let out = config.out.as_path();
    let mut stages = Stages { records: Vec::new() };
    let mut manifest_corpus = None;
    let mut survival = Vec::new();
    let mut correlations = Vec::new();
    let mut skipped_ks = Vec::new();
    let mut models = Vec::new();
    let mut join = None;

    let corpus = stages.run("load", |_| load_corpus_with_report(&config.snapshots));
    let diversity = match &corpus {
        Some((corpus, load)) => {
            manifest_corpus = Some(facts(corpus, load));
            stages.run("survival", |o| {
                let ks: Vec<TopK> = (1..=100).map(TopK::new).collect::<Result<_>>()?;
                write_survival_csv(corpus, &ks, create(out, "survival.csv", o)?)?;
                survival = crate::filter::survival_curve(corpus, &ks)
                    .into_iter()
                    .map(|(k, n)| (k.get(), n))
                    .collect();
                Ok(())
            });
            stages.run("diversity", |o| diversity_stage(corpus, config, o))
        }
        None => {
            stages.skip("survival", "corpus did not load");
            stages.skip("diversity", "corpus did not load");
            None
        }
    };

    let indicators: Option<Vec<CountryIndicators>> = match &config.indicators {
        Some(path) => stages.run("indicators", |_| load_indicators(path)),
        None => {
            stages.fail("indicators", Error::Validation("no indicators file configured".into()));
            None
        }
    };

    match (&diversity, &indicators) {
        (Some(div), Some(ind)) => {
            stages.run("correlate", |o| {
                let records: Vec<DiversityRecord> = config
                    .ks
                    .iter()
                    .flat_map(|k| div.full[k].iter().cloned())
                    .collect();
                let sweep = correlation_sweep(&records, ind, &config.ks, config.level, config.scale)?;
                write_correlation_csv(&sweep.results, create(out, "correlation.csv", o)?)?;
                let points = scatter_points(&div.full[&config.k.get()], ind, config.k.get())?;
                write_scatter_csv(&points, create(out, "scatter.csv", o)?)?;
                let title = format!("Attention diversity and press freedom, k = {}", config.k.get());
                write_text(out, "scatter.svg", &scatter_svg(&points, &title), o)?;
                correlations = sweep.results;
                skipped_ks = sweep.skipped;
                if correlations.is_empty() {
                    return Err(Error::InsufficientData(
                        "no k had at least 3 countries with diversity and PFI".into(),
                    ));
                }
                Ok(())
            });
            stages.run("fit", |o| {
                let (frame, report) = join_frame(&div.windowed, ind)?;
                join = Some(report);
                for (name, spec) in config.specs()? {
                    models.push(fit_model(&frame, &name, &spec));
                }
                write_text(out, "table1.txt", &render_table1(&models), o)?;
                let json = serde_json::to_string_pretty(&models)? + "\n";
                write_text(out, "models.json", &json, o)?;
                match models.iter().find(|m| m.error.is_some()) {
                    Some(m) => Err(failed_model(m)),
                    None => Ok(()),
                }
            });
        }
        _ => {
            stages.skip("correlate", "diversity or indicators unavailable");
            stages.skip("fit", "diversity or indicators unavailable");
        }
    }

    let complete = stages.records.iter().all(|s| s.status == StageStatus::Ok);
    let manifest = Manifest {
        synthetic: is_synthetic(&config.snapshots),
        complete,
        config: config.clone(),
        corpus: manifest_corpus,
        join,
        skipped_ks,
        stages: stages.records,
    };
    let path = out.join("MANIFEST.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(ReportOutcome {
        manifest,
        survival,
        correlations,
        models,
    })
}

fn failed_model(m: &ModelResult) -> Error {
    let message = format!("{}: {}", m.name, m.error.as_deref().unwrap_or("failed"));
    match m.error_kind {
        Some(ErrorKind::Validation) => Error::Validation(message),
        Some(ErrorKind::Io) => Error::Http(message),
        _ => Error::Unidentifiable(message),
    }
}

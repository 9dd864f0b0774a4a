//! `madpfi` command-line front end.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use madpfi_core::corpus::{fetch_snapshots, load_corpus_with_report, Corpus, FetchConfig, Source};
use madpfi_core::diversity::{diversity_table, write_diversity_csv};
use madpfi_core::filter::{build_topk_dataset, TopK};
use madpfi_core::pipeline::{
    fit_model, full_window, join_frame, render_table1, run_report, scatter_svg, windowed_diversity,
    write_survival_csv, ConfigFile, PipelineConfig,
};
use madpfi_core::stats::{
    correlation_sweep, load_indicators, scatter_points, write_correlation_csv, write_scatter_csv,
    CountryIndicators,
};
use madpfi_core::synthetic::{generate, write_fixture, Preset, DEFAULT_SEED};
use madpfi_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "madpfi", version, about = "Media attention diversity and press freedom")]
struct Cli {
    /// TOML file of pipeline settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (filter, diversity) or directory (everything else).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Snapshot directory or file.
    #[arg(long, global = true)]
    snapshots: Option<PathBuf>,
    /// Country indicators CSV.
    #[arg(long, global = true)]
    indicators: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Copy or download snapshot files into the snapshot directory.
    Ingest {
        /// Directory or http(s) base URL.
        #[arg(long)]
        source: String,
        /// Seconds between remote requests.
        #[arg(long, default_value_t = 1.0)]
        rate_limit: f64,
        #[arg(long, default_value_t = 3)]
        attempts: u32,
    },
    /// Countries with complete top-k data, as `k,count`.
    Filter {
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated k values; overrides --k.
        #[arg(long, value_delimiter = ',')]
        survival: Vec<usize>,
    },
    /// Topic or subtopic diversity per country and window.
    Diversity {
        #[arg(long)]
        k: Option<usize>,
        /// Co-mentions per subtopic key; omit for topic-level diversity.
        #[arg(long)]
        l: Option<usize>,
        /// full, monthly or days:N.
        #[arg(long)]
        window: Option<String>,
    },
    /// Diversity/PFI correlation across k.
    Correlate {
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long)]
        level: Option<f64>,
        /// Correlate PFI with log or linear diversity.
        #[arg(long)]
        scale: Option<String>,
        /// k of the scatter file.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit random-intercept models.
    Fit {
        /// 1, 2, 3 or custom; repeatable. Defaults to all three.
        #[arg(long)]
        model: Vec<String>,
        #[arg(long)]
        formula: Vec<String>,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        window: Option<String>,
    },
    /// Write a synthetic fixture.
    Synth {
        #[arg(long, default_value = "paper-shape")]
        preset: String,
    },
    /// Run every stage and write the report bundle.
    Report {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        window: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let file = ConfigFile::load(path)?;
            PipelineConfig::from_file(&file, path.parent())?
        }
        None => PipelineConfig::default(),
    };
    if let Some(p) = &cli.snapshots {
        config.snapshots = p.clone();
    }
    if let Some(p) = &cli.indicators {
        config.indicators = Some(p.clone());
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    Ok(config)
}

fn load(config: &PipelineConfig) -> Result<Corpus> {
    let (corpus, report) = load_corpus_with_report(&config.snapshots)?;
    log::info!(
        "loaded {} snapshots from {} files ({} duplicates)",
        corpus.snapshot_count(),
        report.files,
        report.duplicates
    );
    Ok(corpus)
}

fn indicators(config: &PipelineConfig) -> Result<Vec<CountryIndicators>> {
    match &config.indicators {
        Some(p) => load_indicators(p),
        None => Err(Error::Validation("--indicators is required".into())),
    }
}

/// File at `out`, or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn out_dir(cli: &Cli, fallback: &Path) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| fallback.to_path_buf());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = base_config(&cli)?;
    match &cli.command {
        Command::Ingest {
            source,
            rate_limit,
            attempts,
        } => {
            if !rate_limit.is_finite() || *rate_limit < 0.0 {
                return Err(Error::Validation(format!("invalid rate limit {rate_limit}")));
            }
            let mut fetch = FetchConfig::new(Duration::from_secs_f64(*rate_limit));
            fetch.attempts = *attempts;
            let out = cli.out.clone().unwrap_or(config.snapshots.clone());
            let summary = fetch_snapshots(&Source::parse(source), &fetch, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if summary.failed > 0 {
                eprintln!("error: {} snapshots could not be fetched", summary.failed);
                return Ok(ExitCode::from(4));
            }
        }
        Command::Filter { k, survival } => {
            let ks: Vec<usize> = if !survival.is_empty() {
                survival.clone()
            } else {
                vec![k.unwrap_or(config.k.get())]
            };
            let ks: Vec<TopK> = ks.into_iter().map(TopK::new).collect::<Result<_>>()?;
            let corpus = load(&config)?;
            write_survival_csv(&corpus, &ks, sink(cli.out.as_deref())?)?;
        }
        Command::Diversity { k, l, window } => {
            if let Some(k) = k {
                config.k = TopK::new(*k)?;
            }
            if let Some(w) = window {
                config.windows = w.parse()?;
            }
            let corpus = load(&config)?;
            let records = match l {
                None => windowed_diversity(&corpus, config.k, &config.windows)?,
                Some(l) => {
                    let windows = match config.windows {
                        madpfi_core::diversity::WindowSpec::Full => vec![full_window(&corpus)?],
                        ref spec => {
                            let days: Vec<_> = corpus.days().iter().copied().collect();
                            spec.partition(&days)
                        }
                    };
                    diversity_table(&build_topk_dataset(&corpus, config.k), Some(*l), &windows)?
                }
            };
            write_diversity_csv(&records, sink(cli.out.as_deref())?)?;
        }
        Command::Correlate { ks, level, scale, k } => {
            if !ks.is_empty() {
                config.ks = ks.clone();
            }
            if let Some(level) = level {
                config.level = *level;
            }
            if let Some(s) = scale {
                config.scale = s.parse()?;
            }
            if let Some(k) = k {
                config.k = TopK::new(*k)?;
            }
            config.validate()?;
            let ind = indicators(&config)?;
            let corpus = load(&config)?;
            let window = full_window(&corpus)?;
            let mut records = Vec::new();
            for &k in &config.ks {
                records.extend(diversity_table(&build_topk_dataset(&corpus, TopK::new(k)?), None, &[window])?);
            }
            let sweep = correlation_sweep(&records, &ind, &config.ks, config.level, config.scale)?;
            let dir = out_dir(&cli, Path::new("."))?;
            write_correlation_csv(&sweep.results, create(dir.join("correlation.csv"))?)?;
            let scatter_records = diversity_table(&build_topk_dataset(&corpus, config.k), None, &[window])?;
            let points = scatter_points(&scatter_records, &ind, config.k.get())?;
            write_scatter_csv(&points, create(dir.join("scatter.csv"))?)?;
            let title = format!("Attention diversity and press freedom, k = {}", config.k.get());
            write_file(dir.join("scatter.svg"), &scatter_svg(&points, &title))?;
            for s in &sweep.skipped {
                log::warn!("k = {} skipped: {}", s.k, s.reason);
            }
            if sweep.results.is_empty() {
                return Err(Error::InsufficientData("no k produced a correlation".into()));
            }
        }
        Command::Fit {
            model,
            formula,
            group,
            method,
            k,
            window,
        } => {
            if !model.is_empty() || !formula.is_empty() {
                config.models = Vec::new();
                config.formulas = formula.clone();
                for m in model {
                    match m.as_str() {
                        "custom" => {
                            if formula.is_empty() {
                                return Err(Error::Validation("--model custom needs --formula".into()));
                            }
                        }
                        n => config.models.push(
                            n.parse()
                                .map_err(|_| Error::Validation(format!("unknown model {n:?}")))?,
                        ),
                    }
                }
            }
            if let Some(g) = group {
                config.grouping = Some(g.parse()?);
            }
            if let Some(m) = method {
                config.method = m.parse()?;
            }
            if let Some(k) = k {
                config.k = TopK::new(*k)?;
            }
            if let Some(w) = window {
                config.windows = w.parse()?;
            }
            config.validate()?;
            let specs = config.specs()?;
            let ind = indicators(&config)?;
            let corpus = load(&config)?;
            let records = windowed_diversity(&corpus, config.k, &config.windows)?;
            let (frame, join) = join_frame(&records, &ind)?;
            if join.dropped() > 0 {
                log::warn!("join dropped {} rows", join.dropped());
            }
            let models: Vec<_> = specs.iter().map(|(name, spec)| fit_model(&frame, name, spec)).collect();
            let table = render_table1(&models);
            print!("{table}");
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_file(dir.join("table1.txt"), &table)?;
                let json = serde_json::json!({ "join": join, "models": models });
                write_file(dir.join("models.json"), &(serde_json::to_string_pretty(&json)? + "\n"))?;
            }
            if let Some(m) = models.iter().find(|m| m.error.is_some()) {
                eprintln!("error: {} failed: {}", m.name, m.error.as_deref().unwrap_or(""));
                let code = m.error_kind.map_or(3, |k| k.exit_code());
                return Ok(ExitCode::from(code as u8));
            }
        }
        Command::Synth { preset } => {
            let preset: Preset = preset.parse()?;
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let fixture = generate(preset, seed)?;
            let dir = out_dir(&cli, Path::new("fixture"))?;
            let files = write_fixture(&fixture, &dir)?;
            println!("{}", serde_json::to_string_pretty(&files)?);
        }
        Command::Report { k, window } => {
            if let Some(k) = k {
                config.k = TopK::new(*k)?;
            }
            if let Some(w) = window {
                config.windows = w.parse()?;
            }
            if let Some(out) = &cli.out {
                config.out = out.clone();
            }
            let outcome = run_report(&config)?;
            if let Some((stage, kind, message)) = outcome.failure() {
                eprintln!("error: stage {stage} failed: {message}");
                return Ok(ExitCode::from(kind.exit_code() as u8));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

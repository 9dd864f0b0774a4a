//! Materializes snapshot files from a directory or an HTTP source.
//!
//! HTTP layout: `GET {base}/index.json` returns `[{"country":"EG","date":"2016-03-07"}, ...]`
//! and each snapshot lives at `{base}/snapshots/{country}/{date}.jsonl`.
//! Output is always `{out}/{country}/{date}.jsonl`.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{parse_snapshot_record, snapshot_files, CountryCode, DailySnapshot};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Directory(PathBuf),
    Http(String),
}

impl Source {
    pub fn parse(raw: &str) -> Self {
        if raw.starts_with("http://") || raw.starts_with("https://") {
            Source::Http(raw.trim_end_matches('/').to_string())
        } else {
            Source::Directory(PathBuf::from(raw))
        }
    }
}

#[derive(Clone, Debug)]
pub struct FetchConfig {
    /// Minimum spacing between consecutive remote requests.
    pub rate_limit: Duration,
    pub attempts: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl FetchConfig {
    pub fn new(rate_limit: Duration) -> Self {
        FetchConfig {
            rate_limit,
            attempts: 3,
            backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FetchSummary {
    pub fetched: usize,
    pub skipped: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl FetchSummary {
    fn fail(&mut self, what: String) {
        log::warn!("fetch failed: {what}");
        self.failed += 1;
        self.failures.push(what);
    }
}

#[derive(Deserialize)]
struct IndexEntry {
    country: String,
    date: String,
}

/// Copies or downloads snapshots into `out`, one file per (country, date).
/// Existing output files are left untouched and counted as skipped.
pub fn fetch_snapshots(source: &Source, config: &FetchConfig, out: &Path) -> Result<FetchSummary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match source {
        Source::Directory(dir) => fetch_local(dir, out),
        Source::Http(base) => {
            if config.rate_limit.is_zero() {
                return Err(Error::Validation(
                    "rate limit must be positive for remote sources".into(),
                ));
            }
            fetch_http(base, config, out)
        }
    }
}

fn target_path(out: &Path, country: &CountryCode, date: NaiveDate) -> PathBuf {
    out.join(country.as_str())
        .join(format!("{}.jsonl", date.format("%Y-%m-%d")))
}

fn write_atomic(path: &Path, line: &str) -> Result<()> {
    let parent = path.parent().expect("target paths have a parent");
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = path.with_extension("jsonl.part");
    fs::write(&tmp, format!("{line}\n")).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn store(out: &Path, snap: &DailySnapshot, summary: &mut FetchSummary) -> Result<()> {
    let path = target_path(out, snap.country(), snap.date());
    if path.exists() {
        summary.skipped += 1;
    } else {
        write_atomic(&path, &snap.to_record())?;
        summary.fetched += 1;
    }
    Ok(())
}

fn fetch_local(dir: &Path, out: &Path) -> Result<FetchSummary> {
    let mut summary = FetchSummary::default();
    for file in snapshot_files(dir)? {
        if file.starts_with(out) {
            continue;
        }
        let handle = fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
        for (i, line) in BufReader::new(handle).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&file, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_snapshot_record(&line) {
                Ok(snap) => store(out, &snap, &mut summary)?,
                Err(e) => summary.fail(format!("{}:{}: {e}", file.display(), i + 1)),
            }
        }
    }
    Ok(summary)
}

struct Throttle {
    gap: Duration,
    last: Option<Instant>,
}

impl Throttle {
    fn wait(&mut self) {
        if let Some(last) = self.last {
            let elapsed = last.elapsed();
            if elapsed < self.gap {
                thread::sleep(self.gap - elapsed);
            }
        }
        self.last = Some(Instant::now());
    }
}

struct Client {
    agent: ureq::Agent,
    throttle: Throttle,
    attempts: u32,
    backoff: Duration,
}

impl Client {
    fn get(&mut self, url: &str) -> std::result::Result<String, String> {
        let mut last_err = String::new();
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            self.throttle.wait();
            match self.agent.get(url).call() {
                Ok(mut resp) => match resp.body_mut().read_to_string() {
                    Ok(body) => return Ok(body),
                    Err(e) => last_err = e.to_string(),
                },
                Err(e) => last_err = e.to_string(),
            }
            log::debug!("GET {url} attempt {} failed: {last_err}", attempt + 1);
        }
        Err(format!("GET {url}: {last_err}"))
    }
}

fn fetch_http(base: &str, config: &FetchConfig, out: &Path) -> Result<FetchSummary> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(config.timeout))
        .build()
        .into();
    let mut client = Client {
        agent,
        throttle: Throttle {
            gap: config.rate_limit,
            last: None,
        },
        attempts: config.attempts,
        backoff: config.backoff,
    };

    let index_body = client.get(&format!("{base}/index.json")).map_err(Error::Http)?;
    let index: Vec<IndexEntry> = serde_json::from_str(&index_body)?;

    let mut summary = FetchSummary::default();
    for entry in index {
        let (country, date) = match (
            CountryCode::new(&entry.country),
            NaiveDate::parse_from_str(&entry.date, "%Y-%m-%d"),
        ) {
            (Ok(c), Ok(d)) => (c, d),
            _ => {
                summary.fail(format!("bad index entry {}/{}", entry.country, entry.date));
                continue;
            }
        };
        if target_path(out, &country, date).exists() {
            summary.skipped += 1;
            continue;
        }
        let url = format!("{base}/snapshots/{country}/{}.jsonl", entry.date);
        let body = match client.get(&url) {
            Ok(body) => body,
            Err(e) => {
                summary.fail(e);
                continue;
            }
        };
        let line = body.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        match parse_snapshot_record(line) {
            Ok(snap) if snap.country() == &country && snap.date() == date => {
                store(out, &snap, &mut summary)?
            }
            Ok(snap) => summary.fail(format!(
                "{url}: body is for {}/{}",
                snap.country(),
                snap.date()
            )),
            Err(e) => summary.fail(format!("{url}: {e}")),
        }
    }
    Ok(summary)
}

//! Snapshot data model: ranked daily topic lists per country.
//!
//! One record of the snapshot format is one JSON object on one line:
//!
//! ```text
//! {"country":"EG","date":"2016-03-07","topics":[{"id":"/m/0d06m5","name":"Hillary Clinton","comentions":["/m/02mjmr"]}]}
//! ```
//!
//! Topics appear in rank order. An explicit `"rank"` field is accepted on
//! every topic or on none of them; when present the ranks must read
//! `1, 2, ..., n`.

mod fetch;
pub mod iso;

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use crate::error::{Error, Result};

pub use fetch::{fetch_snapshots, FetchConfig, FetchSummary, Source};

/// Most topics a source publishes per country and day.
pub const MAX_TOPICS: usize = 100;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Topic identity: NFC-normalized, trimmed text. Clones share storage.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicId(Arc<str>);

impl TopicId {
    pub fn new(raw: &str) -> Result<Self> {
        let normalized = normalize(raw);
        if normalized.is_empty() {
            return Err(Error::Record("empty topic id".into()));
        }
        Ok(TopicId(Arc::from(&*normalized)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn normalize(raw: &str) -> Cow<'_, str> {
    let trimmed = raw.trim();
    if is_nfc_quick(trimmed.chars()) == IsNormalized::Yes {
        Cow::Borrowed(trimmed)
    } else {
        Cow::Owned(trimmed.nfc().collect::<String>().trim().to_string())
    }
}

/// Shares one allocation per distinct topic id while a corpus is loaded.
#[derive(Default)]
pub struct TopicInterner {
    seen: HashSet<Arc<str>>,
}

impl TopicInterner {
    pub fn intern(&mut self, raw: &str) -> Result<TopicId> {
        let normalized = normalize(raw);
        if normalized.is_empty() {
            return Err(Error::Record("empty topic id".into()));
        }
        if let Some(existing) = self.seen.get(&*normalized) {
            return Ok(TopicId(existing.clone()));
        }
        let id: Arc<str> = Arc::from(&*normalized);
        self.seen.insert(id.clone());
        Ok(TopicId(id))
    }
}

/// Upper-cased country code. ISO 3166-1 alpha-2 is expected but not required.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode(String);

impl CountryCode {
    pub fn new(raw: &str) -> Result<Self> {
        let code = raw.trim().to_ascii_uppercase();
        if code.is_empty() {
            return Err(Error::Record("empty country code".into()));
        }
        Ok(CountryCode(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_iso(&self) -> bool {
        iso::is_known(&self.0)
    }
}

impl TryFrom<String> for CountryCode {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        CountryCode::new(&value)
    }
}

impl From<CountryCode> for String {
    fn from(code: CountryCode) -> String {
        code.0
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicMention {
    pub topic: TopicId,
    pub rank: u32,
    /// Co-mentioned topics, most frequent first.
    pub comentions: Vec<TopicId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DailySnapshot {
    country: CountryCode,
    date: NaiveDate,
    mentions: Vec<TopicMention>,
}

impl DailySnapshot {
    pub fn new(country: CountryCode, date: NaiveDate, mentions: Vec<TopicMention>) -> Result<Self> {
        if mentions.len() > MAX_TOPICS {
            return Err(Error::Record(format!(
                "{country}/{date}: {} topics exceeds the limit of {MAX_TOPICS}",
                mentions.len()
            )));
        }
        let mut seen = HashSet::with_capacity(mentions.len());
        for (i, m) in mentions.iter().enumerate() {
            if m.rank as usize != i + 1 {
                return Err(Error::Record(format!(
                    "{country}/{date}: rank {} at position {} (ranks must be 1..n without gaps)",
                    m.rank,
                    i + 1
                )));
            }
            if !seen.insert(&m.topic) {
                return Err(Error::DuplicateTopic {
                    country: country.to_string(),
                    date: date.to_string(),
                    topic: m.topic.to_string(),
                });
            }
            let mut co = HashSet::with_capacity(m.comentions.len());
            for c in &m.comentions {
                if *c == m.topic {
                    return Err(Error::Record(format!(
                        "{country}/{date}: topic {} lists itself as a co-mention",
                        m.topic
                    )));
                }
                if !co.insert(c) {
                    return Err(Error::Record(format!(
                        "{country}/{date}: topic {} repeats co-mention {c}",
                        m.topic
                    )));
                }
            }
        }
        Ok(DailySnapshot {
            country,
            date,
            mentions,
        })
    }

    pub fn country(&self) -> &CountryCode {
        &self.country
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn mentions(&self) -> &[TopicMention] {
        &self.mentions
    }

    pub fn depth(&self) -> usize {
        self.mentions.len()
    }

    /// Serializes to one line of the snapshot format (no trailing newline).
    pub fn to_record(&self) -> String {
        let record = RecordOut {
            country: self.country.as_str(),
            date: self.date.format(DATE_FORMAT).to_string(),
            topics: self
                .mentions
                .iter()
                .map(|m| TopicOut {
                    id: m.topic.as_str(),
                    comentions: m.comentions.iter().map(TopicId::as_str).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&record).expect("snapshot records always serialize")
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    country: &'a str,
    date: String,
    topics: Vec<TopicOut<'a>>,
}

#[derive(Serialize)]
struct TopicOut<'a> {
    id: &'a str,
    comentions: Vec<&'a str>,
}

// Borrowed where the JSON has no escapes.
#[derive(Deserialize)]
struct RecordIn<'a> {
    #[serde(borrow)]
    country: Cow<'a, str>,
    #[serde(borrow)]
    date: Cow<'a, str>,
    #[serde(borrow)]
    topics: Vec<TopicIn<'a>>,
}

#[derive(Deserialize)]
struct TopicIn<'a> {
    #[serde(default, borrow)]
    id: Option<Cow<'a, str>>,
    #[serde(default, borrow)]
    name: Option<Cow<'a, str>>,
    #[serde(default)]
    rank: Option<u32>,
    #[serde(default, borrow)]
    comentions: Vec<Cow<'a, str>>,
}

/// Parses and validates one snapshot record.
pub fn parse_snapshot_record(record: &str) -> Result<DailySnapshot> {
    parse_with(record, &mut TopicInterner::default())
}

fn parse_with(record: &str, interner: &mut TopicInterner) -> Result<DailySnapshot> {
    let raw: RecordIn = serde_json::from_str(record).map_err(|e| {
        Error::Record(format!(
            "malformed JSON at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let country = CountryCode::new(&raw.country)?;
    let date = NaiveDate::parse_from_str(raw.date.trim(), DATE_FORMAT)
        .map_err(|e| Error::Record(format!("bad date {:?}: {e}", raw.date)))?;

    let explicit = raw.topics.iter().filter(|t| t.rank.is_some()).count();
    if explicit != 0 && explicit != raw.topics.len() {
        return Err(Error::Record(format!(
            "{country}/{date}: rank given on {explicit} of {} topics",
            raw.topics.len()
        )));
    }

    let mut mentions = Vec::with_capacity(raw.topics.len());
    for (i, t) in raw.topics.into_iter().enumerate() {
        let text = t
            .id
            .filter(|s| !s.trim().is_empty())
            .or(t.name)
            .ok_or_else(|| Error::Record(format!("{country}/{date}: topic {} has no id", i + 1)))?;
        let topic = interner.intern(&text)?;
        let comentions = t
            .comentions
            .iter()
            .map(|c| interner.intern(c))
            .collect::<Result<Vec<_>>>()?;
        mentions.push(TopicMention {
            topic,
            rank: t.rank.unwrap_or(i as u32 + 1),
            comentions,
        });
    }
    DailySnapshot::new(country, date, mentions)
}

/// Immutable collection of snapshots keyed by country, then date.
///
/// The day set `D` is the set of dates on which at least one country has a
/// snapshot, so a globally missed crawl day does not count as a day.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    snapshots: BTreeMap<CountryCode, BTreeMap<NaiveDate, DailySnapshot>>,
    days: BTreeSet<NaiveDate>,
}

impl Corpus {
    /// Builds a corpus; a later snapshot for the same (country, date)
    /// replaces an earlier one. Returns the number of replaced snapshots.
    pub fn from_snapshots(snapshots: impl IntoIterator<Item = DailySnapshot>) -> (Self, usize) {
        let mut by_country: BTreeMap<CountryCode, BTreeMap<NaiveDate, DailySnapshot>> =
            BTreeMap::new();
        let mut days = BTreeSet::new();
        let mut replaced = 0;
        for snap in snapshots {
            days.insert(snap.date);
            if by_country
                .entry(snap.country.clone())
                .or_default()
                .insert(snap.date, snap)
                .is_some()
            {
                replaced += 1;
            }
        }
        (
            Corpus {
                snapshots: by_country,
                days,
            },
            replaced,
        )
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Inclusive first and last observed dates.
    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        Some((*self.days.first()?, *self.days.last()?))
    }

    /// Distinct observed dates (`D`).
    pub fn days(&self) -> &BTreeSet<NaiveDate> {
        &self.days
    }

    pub fn countries(&self) -> impl Iterator<Item = &CountryCode> {
        self.snapshots.keys()
    }

    pub fn country_count(&self) -> usize {
        self.snapshots.len()
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.values().map(BTreeMap::len).sum()
    }

    pub fn country(&self, code: &CountryCode) -> Option<&BTreeMap<NaiveDate, DailySnapshot>> {
        self.snapshots.get(code)
    }

    pub fn get(&self, code: &CountryCode, date: NaiveDate) -> Option<&DailySnapshot> {
        self.snapshots.get(code)?.get(&date)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CountryCode, &BTreeMap<NaiveDate, DailySnapshot>)> {
        self.snapshots.iter()
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &DailySnapshot> {
        self.snapshots.values().flat_map(BTreeMap::values)
    }
}

/// Bookkeeping from [`load_corpus_with_report`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub files: usize,
    pub records: usize,
    /// Records that replaced an earlier record for the same (country, date).
    pub duplicates: usize,
    /// Country codes missing from the bundled ISO 3166-1 table.
    pub unknown_countries: Vec<String>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    load_corpus_with_report(path).map(|(corpus, _)| corpus)
}

/// Loads every `*.jsonl` file under `path` (or `path` itself when it is a
/// file). Files are read in lexicographic path order, which decides
/// duplicate resolution.
pub fn load_corpus_with_report(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let files = snapshot_files(path)?;
    let mut interner = TopicInterner::default();
    let mut snapshots = Vec::new();
    for file in &files {
        read_snapshot_file(file, &mut interner, &mut snapshots)?;
    }
    if snapshots.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    let records = snapshots.len();
    let (corpus, duplicates) = Corpus::from_snapshots(snapshots);
    let unknown_countries: Vec<String> = corpus
        .countries()
        .filter(|c| !c.is_iso())
        .map(|c| c.to_string())
        .collect();
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate (country, date) records replaced by later ones");
    }
    if !unknown_countries.is_empty() {
        log::warn!(
            "{} country codes not in ISO 3166-1: {}",
            unknown_countries.len(),
            unknown_countries.join(",")
        );
    }
    let report = LoadReport {
        files: files.len(),
        records,
        duplicates,
        unknown_countries,
    };
    Ok((corpus, report))
}

pub(crate) fn snapshot_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let p = entry.path();
            let ft = entry.file_type().map_err(|e| Error::io(&p, e))?;
            if ft.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|ext| ext == "jsonl") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_snapshot_file(
    file: &Path,
    interner: &mut TopicInterner,
    out: &mut Vec<DailySnapshot>,
) -> Result<()> {
    let handle = fs::File::open(file).map_err(|e| Error::io(file, e))?;
    for (i, line) in BufReader::new(handle).lines().enumerate() {
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let snap = parse_with(&line, interner).map_err(|e| Error::Parse {
            file: file.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(snap);
    }
    Ok(())
}

/// Writes snapshots as JSON Lines, one file per country, under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    use std::io::Write;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(corpus.country_count());
    for (country, days) in corpus.iter() {
        let path = dir.join(format!("{country}.jsonl"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for snap in days.values() {
            writeln!(w, "{}", snap.to_record()).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub countries: usize,
    pub days: usize,
    pub snapshots: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub days_per_country: BTreeMap<String, usize>,
    /// Topic count per snapshot -> number of snapshots with that count.
    pub depth_histogram: BTreeMap<usize, usize>,
}

pub fn corpus_summary(corpus: &Corpus) -> CorpusSummary {
    let mut summary = CorpusSummary {
        countries: corpus.country_count(),
        days: corpus.days().len(),
        snapshots: corpus.snapshot_count(),
        first_date: corpus.date_range().map(|r| r.0),
        last_date: corpus.date_range().map(|r| r.1),
        ..Default::default()
    };
    for (country, days) in corpus.iter() {
        summary
            .days_per_country
            .insert(country.to_string(), days.len());
        for snap in days.values() {
            *summary.depth_histogram.entry(snap.depth()).or_default() += 1;
        }
    }
    summary
}

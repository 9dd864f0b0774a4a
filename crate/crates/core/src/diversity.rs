//! Media attention diversity: the number of distinct topics (or
//! topic/co-mention pairs) a country's daily top-`k` lists cover over a
//! period.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use chrono::{Days, Months, NaiveDate};
use serde::Serialize;

use crate::corpus::{CountryCode, DailySnapshot, TopicId, TopicMention};
use crate::error::{Error, Result};
use crate::filter::{FilteredDataset, TopK};

/// Co-mentions per topic used for subtopic diversity unless told otherwise.
pub const DEFAULT_L: usize = 3;

/// Inclusive date interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Validation(format!("window ends {end} before it starts {start}")));
        }
        Ok(DateWindow { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Positions of `days` (sorted) that fall inside the window.
    pub fn index_range(&self, days: &[NaiveDate]) -> Range<usize> {
        let lo = days.partition_point(|d| *d < self.start);
        let hi = days.partition_point(|d| *d <= self.end);
        lo..hi.max(lo)
    }
}

impl fmt::Display for DateWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// How the observed period is cut into windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowSpec {
    Full,
    /// Month-long windows anchored on the first observed day. A trailing
    /// remainder shorter than 15 days is folded into the previous window.
    Monthly,
    /// Consecutive windows of `n` calendar days; the last may be shorter.
    Days(u32),
}

impl FromStr for WindowSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(WindowSpec::Full),
            "monthly" => Ok(WindowSpec::Monthly),
            other => match other.strip_prefix("days:").map(str::parse::<u32>) {
                Some(Ok(n)) if n > 0 => Ok(WindowSpec::Days(n)),
                _ => Err(Error::Validation(format!(
                    "window must be full, monthly or days:N, got {s:?}"
                ))),
            },
        }
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowSpec::Full => f.write_str("full"),
            WindowSpec::Monthly => f.write_str("monthly"),
            WindowSpec::Days(n) => write!(f, "days:{n}"),
        }
    }
}

impl Serialize for WindowSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl WindowSpec {
    /// Splits the span of `days` (sorted, distinct) into windows, dropping
    /// any window that contains no observed day.
    pub fn partition(&self, days: &[NaiveDate]) -> Vec<DateWindow> {
        let (Some(&first), Some(&last)) = (days.first(), days.last()) else {
            return Vec::new();
        };
        let mut windows = match *self {
            WindowSpec::Full => vec![DateWindow { start: first, end: last }],
            WindowSpec::Monthly => {
                let mut out: Vec<DateWindow> = Vec::new();
                let mut i = 0;
                loop {
                    let start = first + Months::new(i);
                    if start > last {
                        break;
                    }
                    let next = first + Months::new(i + 1);
                    let end = (next - Days::new(1)).min(last);
                    out.push(DateWindow { start, end });
                    i += 1;
                }
                if out.len() > 1 {
                    let tail = out[out.len() - 1];
                    if (tail.end - tail.start).num_days() + 1 < 15 {
                        out.pop();
                        out.last_mut().unwrap().end = tail.end;
                    }
                }
                out
            }
            WindowSpec::Days(n) => {
                let mut out = Vec::new();
                let mut start = first;
                while start <= last {
                    let end = (start + Days::new(n as u64 - 1)).min(last);
                    out.push(DateWindow { start, end });
                    start = end + Days::new(1);
                }
                out
            }
        };
        windows.retain(|w| !w.index_range(days).is_empty());
        windows
    }
}

/// Topics ranked `1..=k` in one snapshot.
pub fn top_k_topics(snapshot: &DailySnapshot, k: TopK) -> Result<BTreeSet<TopicId>> {
    let k = k.get();
    if snapshot.depth() < k {
        return Err(Error::InsufficientDepth {
            available: snapshot.depth(),
            k,
        });
    }
    Ok(snapshot.mentions()[..k]
        .iter()
        .map(|m| m.topic.clone())
        .collect())
}

/// A topic refined by one of its co-mentions. `comention` is `None` for
/// a topic reported without co-mentions, which then counts once as itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubtopicKey {
    pub topic: TopicId,
    pub comention: Option<TopicId>,
}

pub fn subtopic_keys(mention: &TopicMention, l: usize) -> Vec<SubtopicKey> {
    if mention.comentions.is_empty() {
        return vec![SubtopicKey {
            topic: mention.topic.clone(),
            comention: None,
        }];
    }
    mention
        .comentions
        .iter()
        .take(l)
        .map(|c| SubtopicKey {
            topic: mention.topic.clone(),
            comention: Some(c.clone()),
        })
        .collect()
}

fn country_days<'d, 'a>(
    dataset: &'d FilteredDataset<'a>,
    country: &CountryCode,
    window: &DateWindow,
) -> Result<&'d [&'a [TopicMention]]> {
    let daily = dataset
        .daily(country)
        .ok_or_else(|| Error::NotEligible(country.to_string()))?;
    let days = dataset.days();
    if let (Some(first), Some(last)) = (days.first(), days.last()) {
        if window.start < *first || window.end > *last {
            return Err(Error::Validation(format!(
                "window {window} is outside the observed period {first}..{last}"
            )));
        }
    }
    Ok(&daily[window.index_range(days)])
}

/// `U^c(k)` over `window`: distinct topics across the daily top-`k` lists.
pub fn topic_diversity(
    dataset: &FilteredDataset<'_>,
    country: &CountryCode,
    window: &DateWindow,
) -> Result<usize> {
    let days = country_days(dataset, country, window)?;
    Ok(topic_union(days))
}

fn topic_union(days: &[&[TopicMention]]) -> usize {
    let mut seen: HashSet<&TopicId> = HashSet::new();
    for day in days {
        seen.extend(day.iter().map(|m| &m.topic));
    }
    seen.len()
}

/// Distinct (topic, co-mention) pairs across the daily top-`k` lists, using
/// the first `l` co-mentions of each mention.
pub fn subtopic_diversity(
    dataset: &FilteredDataset<'_>,
    country: &CountryCode,
    l: usize,
    window: &DateWindow,
) -> Result<usize> {
    check_l(l)?;
    let days = country_days(dataset, country, window)?;
    Ok(subtopic_union(days, l).0)
}

fn check_l(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::Validation("l must be at least 1".into()));
    }
    Ok(())
}

/// Returns (distinct keys, keys that are bare-topic sentinels).
fn subtopic_union(days: &[&[TopicMention]], l: usize) -> (usize, usize) {
    let mut seen: HashSet<(&TopicId, Option<&TopicId>)> = HashSet::new();
    let mut bare = 0;
    for day in days {
        for m in day.iter() {
            if m.comentions.is_empty() {
                bare += seen.insert((&m.topic, None)) as usize;
            } else {
                seen.extend(m.comentions.iter().take(l).map(|c| (&m.topic, Some(c))));
            }
        }
    }
    (seen.len(), bare)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiversityRecord {
    pub country: CountryCode,
    pub k: usize,
    /// Co-mentions per topic; `None` for topic-level diversity.
    pub l: Option<usize>,
    pub window: DateWindow,
    pub value: usize,
    /// Subtopic keys counted for topics that had no co-mentions.
    pub bare_topics: usize,
}

/// One record per (country, window), ordered by country then window start.
pub fn diversity_table(
    dataset: &FilteredDataset<'_>,
    l: Option<usize>,
    windows: &[DateWindow],
) -> Result<Vec<DiversityRecord>> {
    if let Some(l) = l {
        check_l(l)?;
    }
    let days = dataset.days();
    for pair in windows.windows(2) {
        if pair[0].end >= pair[1].start {
            return Err(Error::Validation(format!(
                "windows {} and {} overlap or are out of order",
                pair[0], pair[1]
            )));
        }
    }
    let ranges = windows
        .iter()
        .map(|w| {
            let range = w.index_range(days);
            if range.is_empty() {
                Err(Error::Validation(format!("window {w} contains no observed day")))
            } else {
                Ok(range)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let k = dataset.k().get();
    let mut out = Vec::with_capacity(dataset.len() * windows.len());
    for country in dataset.countries() {
        let daily = dataset.daily(country).expect("iterating dataset countries");
        for (window, range) in windows.iter().zip(&ranges) {
            let slice = &daily[range.clone()];
            let (value, bare_topics) = match l {
                None => (topic_union(slice), 0),
                Some(l) => subtopic_union(slice, l),
            };
            out.push(DiversityRecord {
                country: country.clone(),
                k,
                l,
                window: *window,
                value,
                bare_topics,
            });
        }
    }
    Ok(out)
}

/// CSV with header `country,k,l,window_start,window_end,u`.
pub fn write_diversity_csv<W: Write>(records: &[DiversityRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "k", "l", "window_start", "window_end", "u"])?;
    for r in records {
        w.write_record([
            r.country.to_string(),
            r.k.to_string(),
            r.l.map(|l| l.to_string()).unwrap_or_default(),
            r.window.start.to_string(),
            r.window.end.to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

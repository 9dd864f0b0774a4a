//! Completeness filtering: which countries report at least `k` topics on
//! every observed day, and the resulting top-`k` dataset.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CountryCode, TopicMention, MAX_TOPICS};
use crate::error::{Error, Result};

/// Depth threshold `k`, validated to `1..=100`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TopK(usize);

impl TopK {
    pub fn new(k: usize) -> Result<Self> {
        if (1..=MAX_TOPICS).contains(&k) {
            Ok(TopK(k))
        } else {
            Err(Error::Validation(format!("k must be in 1..={MAX_TOPICS}, got {k}")))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for TopK {
    type Error = Error;
    fn try_from(k: usize) -> Result<Self> {
        TopK::new(k)
    }
}

impl From<TopK> for usize {
    fn from(k: TopK) -> usize {
        k.0
    }
}

/// Smallest daily topic count per country over all of `D`; 0 when the
/// country is missing any day.
pub fn min_depths(corpus: &Corpus) -> BTreeMap<&CountryCode, usize> {
    let days = corpus.days().len();
    corpus
        .iter()
        .map(|(country, snaps)| {
            let depth = if snaps.len() < days {
                0
            } else {
                snaps.values().map(|s| s.depth()).min().unwrap_or(0)
            };
            (country, depth)
        })
        .collect()
}

/// `C^k`: countries with at least `k` topics on every day in `D`.
pub fn eligible_countries(corpus: &Corpus, k: TopK) -> BTreeSet<CountryCode> {
    min_depths(corpus)
        .into_iter()
        .filter(|&(_, depth)| depth >= k.get())
        .map(|(c, _)| c.clone())
        .collect()
}

/// `|C^k|` for each requested `k`, in input order.
pub fn survival_curve(corpus: &Corpus, ks: &[TopK]) -> Vec<(TopK, usize)> {
    let depths: Vec<usize> = min_depths(corpus).into_values().collect();
    ks.iter()
        .map(|&k| (k, depths.iter().filter(|&&d| d >= k.get()).count()))
        .collect()
}

/// `M(k)`: for each eligible country, its top-`k` mentions on every day.
#[derive(Clone, Debug)]
pub struct FilteredDataset<'a> {
    k: TopK,
    days: Vec<NaiveDate>,
    countries: BTreeMap<CountryCode, Vec<&'a [TopicMention]>>,
}

impl<'a> FilteredDataset<'a> {
    pub fn k(&self) -> TopK {
        self.k
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn countries(&self) -> impl Iterator<Item = &CountryCode> {
        self.countries.keys()
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn contains(&self, country: &CountryCode) -> bool {
        self.countries.contains_key(country)
    }

    /// Top-`k` mentions for `country`, one slice per day of [`Self::days`].
    pub fn daily(&self, country: &CountryCode) -> Option<&[&'a [TopicMention]]> {
        self.countries.get(country).map(Vec::as_slice)
    }
}

pub fn build_topk_dataset(corpus: &Corpus, k: TopK) -> FilteredDataset<'_> {
    let days: Vec<NaiveDate> = corpus.days().iter().copied().collect();
    let countries = eligible_countries(corpus, k)
        .into_iter()
        .map(|country| {
            let snaps = corpus.country(&country).expect("eligible countries exist");
            let per_day = days
                .iter()
                .map(|d| &snaps[d].mentions()[..k.get()])
                .collect();
            (country, per_day)
        })
        .collect();
    FilteredDataset { k, days, countries }
}

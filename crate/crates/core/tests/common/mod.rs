//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

pub mod lmm;

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use madpfi_core::corpus::{CountryCode, Corpus, DailySnapshot, TopicId, TopicMention};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 3, 7).unwrap()
}

pub fn snapshot(country: &str, date: NaiveDate, topics: &[(&str, &[&str])]) -> DailySnapshot {
    let mentions = topics
        .iter()
        .enumerate()
        .map(|(i, (t, co))| TopicMention {
            topic: TopicId::new(t).unwrap(),
            rank: i as u32 + 1,
            comentions: co.iter().map(|c| TopicId::new(c).unwrap()).collect(),
        })
        .collect();
    DailySnapshot::new(CountryCode::new(country).unwrap(), date, mentions).unwrap()
}

/// Random corpus with up to the given sizes. Topics come from a shared
/// vocabulary so unions overlap; some snapshots are shallow and some days
/// are missing for some countries.
pub fn random_corpus(seed: u64, max_countries: usize, max_days: usize, max_topics: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let countries = rng.random_range(1..=max_countries);
    let days = rng.random_range(1..=max_days);
    let vocab: Vec<String> = (0..2 * max_topics).map(|i| format!("t{i}")).collect();
    let mut snaps = Vec::new();
    for c in 0..countries {
        let code = CountryCode::new(&format!("C{c:02}")).unwrap();
        let full = c == 0 || rng.random_bool(0.5);
        let floor = rng.random_range(1..=max_topics);
        for d in 0..days {
            if !full && rng.random_bool(0.03) {
                continue;
            }
            let depth = if full { max_topics } else { rng.random_range(floor..=max_topics) };
            let mut order: Vec<&String> = vocab.iter().collect();
            order.shuffle(&mut rng);
            let mentions = order[..depth]
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let n_co = rng.random_range(0..=4);
                    let mut co: Vec<&String> = vocab.iter().filter(|v| v != t).collect();
                    co.shuffle(&mut rng);
                    TopicMention {
                        topic: TopicId::new(t).unwrap(),
                        rank: i as u32 + 1,
                        comentions: co[..n_co].iter().map(|s| TopicId::new(s).unwrap()).collect(),
                    }
                })
                .collect();
            let date = day0() + Duration::days(d as i64);
            snaps.push(DailySnapshot::new(code.clone(), date, mentions).unwrap());
        }
    }
    Corpus::from_snapshots(snaps).0
}

/// Every date on which any country has a snapshot.
pub fn observed_days(corpus: &Corpus) -> BTreeSet<NaiveDate> {
    corpus.snapshots().map(|s| s.date()).collect()
}

pub fn brute_eligible(corpus: &Corpus, k: usize) -> BTreeSet<String> {
    let days = observed_days(corpus);
    corpus
        .countries()
        .filter(|c| {
            days.iter()
                .all(|&d| corpus.get(c, d).is_some_and(|s| s.mentions().len() >= k))
        })
        .map(|c| c.to_string())
        .collect()
}

fn window_days(corpus: &Corpus, start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    observed_days(corpus)
        .into_iter()
        .filter(|d| *d >= start && *d <= end)
        .collect()
}

pub fn brute_topic_u(corpus: &Corpus, country: &CountryCode, k: usize, start: NaiveDate, end: NaiveDate) -> usize {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for d in window_days(corpus, start, end) {
        let snap = corpus.get(country, d).unwrap();
        for m in &snap.mentions()[..k] {
            seen.insert(m.topic.as_str().to_string());
        }
    }
    seen.len()
}

pub fn brute_subtopic_u(
    corpus: &Corpus,
    country: &CountryCode,
    k: usize,
    l: usize,
    start: NaiveDate,
    end: NaiveDate,
) -> usize {
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for d in window_days(corpus, start, end) {
        let snap = corpus.get(country, d).unwrap();
        for m in &snap.mentions()[..k] {
            let t = m.topic.as_str().to_string();
            if m.comentions.is_empty() {
                // a bare topic counts once; "\0" cannot be a trimmed id
                seen.insert((t.clone(), "\0".to_string()));
            }
            for c in m.comentions.iter().take(l) {
                seen.insert((t.clone(), c.as_str().to_string()));
            }
        }
    }
    seen.len()
}

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::rng;
use crate::corpus::{CountryCode, Corpus, DailySnapshot, TopicId};
use crate::diversity::{DateWindow, WindowSpec};
use crate::error::{Error, Result};
use crate::filter::{eligible_countries, TopK};
use crate::stats::CountryIndicators;

const REGIONS: usize = 8;

/// Deterministic region label derived from the country code.
pub fn region_of(country: &CountryCode) -> String {
    let h = country
        .as_str()
        .bytes()
        .fold(7usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize));
    format!("R{}", h % REGIONS + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndicatorParams {
    /// Slope of PFI on log diversity.
    pub coupling: f64,
    /// Observation-level noise.
    pub noise_sd: f64,
    pub region_sd: f64,
    /// Country-level effect, shared by all of a country's windows.
    pub country_sd: f64,
    /// PFI at average log diversity.
    pub baseline: f64,
    pub k: usize,
    /// Windows for the per-window PFI rows; a single window gives none.
    pub windows: WindowSpec,
    /// Countries of `C^k` whose PFI is withheld.
    pub missing_pfi: usize,
    /// Countries never chosen for withholding.
    pub keep: Vec<String>,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        IndicatorParams {
            coupling: 0.0,
            noise_sd: 4.0,
            region_sd: 5.0,
            country_sd: 8.0,
            baseline: 40.0,
            k: 90,
            windows: WindowSpec::Monthly,
            missing_pfi: 0,
            keep: Vec::new(),
        }
    }
}

impl IndicatorParams {
    pub fn paper_shape() -> Self {
        IndicatorParams {
            missing_pfi: 8,
            keep: vec!["EG".into(), "LU".into()],
            ..IndicatorParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisRow {
    pub country: CountryCode,
    pub region: String,
    /// Member of `C^k`.
    pub eligible: bool,
    /// Log of the distinct topics ranked within `k` over all observed days.
    pub ln_u: f64,
    /// Per-window log diversity (eligible countries only).
    pub windows: Vec<(DateWindow, f64)>,
}

/// Seed-independent part of the indicator generator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndicatorBasis {
    pub rows: Vec<BasisRow>,
    pub mean_ln_u: f64,
    pub mean_ln_u_window: f64,
}

fn ln_union<'a>(topics: impl Iterator<Item = &'a TopicId>) -> f64 {
    let set: HashSet<&TopicId> = topics.collect();
    (set.len().max(1) as f64).ln()
}

fn ranked_topics(
    snaps: &BTreeMap<NaiveDate, DailySnapshot>,
    window: Option<DateWindow>,
    k: usize,
) -> impl Iterator<Item = &TopicId> {
    snaps
        .values()
        .filter(move |s| window.is_none_or(|w| w.contains(s.date())))
        .flat_map(move |s| s.mentions().iter().take(k).map(|m| &m.topic))
}

pub fn indicator_basis(corpus: &Corpus, params: &IndicatorParams) -> Result<IndicatorBasis> {
    if corpus.is_empty() {
        return Err(Error::Validation("cannot generate indicators for an empty corpus".into()));
    }
    let k = TopK::new(params.k)?;
    let eligible = eligible_countries(corpus, k);
    let days: Vec<_> = corpus.days().iter().copied().collect();
    let windows = params.windows.partition(&days);
    let panel = windows.len() > 1;

    let rows: Vec<BasisRow> = corpus
        .iter()
        .map(|(country, snaps)| {
            let ranked = |w: Option<DateWindow>| ranked_topics(snaps, w, params.k);
            let is_eligible = eligible.contains(country);
            let per_window = if is_eligible && panel {
                windows.iter().map(|w| (*w, ln_union(ranked(Some(*w))))).collect()
            } else {
                Vec::new()
            };
            BasisRow {
                country: country.clone(),
                region: region_of(country),
                eligible: is_eligible,
                ln_u: ln_union(ranked(None)),
                windows: per_window,
            }
        })
        .collect();

    let mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let mean_ln_u = mean(rows.iter().map(|r| r.ln_u).collect());
    let mean_ln_u_window = mean(rows.iter().flat_map(|r| r.windows.iter().map(|w| w.1)).collect());
    Ok(IndicatorBasis {
        rows,
        mean_ln_u,
        mean_ln_u_window,
    })
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

/// Country-level rows for every corpus country, plus one PFI row per window
/// for countries of `C^k`:
///
/// ```text
/// pfi = baseline + coupling * (ln u - mean ln u) + region + country + noise
/// ```
///
/// clamped at 0. National attributes are drawn independently of diversity
/// and of each other.
pub fn indicators_from_basis(
    basis: &IndicatorBasis,
    params: &IndicatorParams,
    seed: u64,
) -> Vec<CountryIndicators> {
    let mut r = rng(seed);
    let mut region_effect = BTreeMap::new();
    let mut labels: Vec<&str> = basis.rows.iter().map(|b| b.region.as_str()).collect();
    labels.sort();
    labels.dedup();
    for label in labels {
        region_effect.insert(label, normal(&mut r, params.region_sd));
    }

    let candidates: Vec<usize> = basis
        .rows
        .iter()
        .enumerate()
        .filter(|(_, b)| b.eligible && !params.keep.iter().any(|k| k == b.country.as_str()))
        .map(|(i, _)| i)
        .collect();
    let withheld: HashSet<usize> =
        index::sample(&mut r, candidates.len(), params.missing_pfi.min(candidates.len()))
            .into_iter()
            .map(|i| candidates[i])
            .collect();

    let mut out = Vec::new();
    for (i, b) in basis.rows.iter().enumerate() {
        let group = region_effect[b.region.as_str()] + normal(&mut r, params.country_sd);
        let noise = normal(&mut r, params.noise_sd);
        let cellular = (100.0 + normal(&mut r, 25.0)).clamp(5.0, 250.0);
        let gdp = (9.0 + normal(&mut r, 1.1)).exp();
        let population = (16.0 + normal(&mut r, 1.5)).exp();
        let unemployment = (7f64.ln() + normal(&mut r, 0.5)).exp().clamp(0.5, 30.0);
        let pfi = |ln_u: f64, mean: f64, noise: f64| {
            (params.baseline + params.coupling * (ln_u - mean) + group + noise).max(0.0)
        };
        let keep_pfi = !withheld.contains(&i);
        out.push(CountryIndicators {
            country: b.country.clone(),
            pfi: keep_pfi.then(|| pfi(b.ln_u, basis.mean_ln_u, noise)),
            cellular_per_100: Some(cellular),
            gdp_per_capita: Some(gdp),
            population: Some(population),
            unemployment_pct: Some(unemployment),
            region: Some(b.region.clone()),
            window_start: None,
        });
        for (w, ln_u) in &b.windows {
            let noise = normal(&mut r, params.noise_sd);
            out.push(CountryIndicators {
                country: b.country.clone(),
                pfi: keep_pfi.then(|| pfi(*ln_u, basis.mean_ln_u_window, noise)),
                cellular_per_100: None,
                gdp_per_capita: None,
                population: None,
                unemployment_pct: None,
                region: Some(b.region.clone()),
                window_start: Some(w.start),
            });
        }
    }
    out
}

/// Indicator table with the default group-effect scales.
pub fn gen_indicators(
    corpus: &Corpus,
    coupling: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<CountryIndicators>> {
    let params = IndicatorParams {
        coupling,
        noise_sd,
        ..IndicatorParams::default()
    };
    let basis = indicator_basis(corpus, &params)?;
    Ok(indicators_from_basis(&basis, &params, seed))
}

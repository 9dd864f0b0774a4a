//! Seeded synthetic corpora and indicator tables with known answers, plus
//! closed-form oracles for the estimators.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so a fixture is reproducible from `(preset, seed)`.

mod indicators;
mod paper_shape;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{iso, write_corpus, CountryCode, Corpus, DailySnapshot, TopicId, TopicMention};
use crate::error::{Error, Result};
use crate::stats::{write_indicators, CountryIndicators};

pub use indicators::{
    gen_indicators, indicator_basis, indicators_from_basis, region_of, IndicatorBasis,
    IndicatorParams,
};
pub use paper_shape::{paper_shape_corpus, PaperShapeTargets, PAPER_SHAPE};

/// First calendar day of every synthetic corpus.
pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 3, 7).expect("valid date")
}

/// Name of the marker file written next to synthetic snapshots.
pub const MARKER_FILE: &str = "SYNTHETIC.json";

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthParams {
    pub countries: usize,
    pub days: usize,
    pub topics_per_day: usize,
    /// Distinct topics available to each country.
    pub topic_pool_sizes: Vec<usize>,
    /// Per-country probability that a daily slot repeats an earlier topic.
    pub reuse: Vec<f64>,
    /// Co-mentions attached to every mention.
    pub comentions: usize,
    /// Slope of synthetic PFI on log diversity, used by [`gen_indicators`].
    pub coupling: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthParams {
    /// Same pool size and reuse probability for every country.
    pub fn uniform(
        countries: usize,
        days: usize,
        topics_per_day: usize,
        pool: usize,
        reuse: f64,
        seed: u64,
    ) -> Self {
        SynthParams {
            countries,
            days,
            topics_per_day,
            topic_pool_sizes: vec![pool; countries],
            reuse: vec![reuse; countries],
            comentions: 3,
            coupling: 0.0,
            noise_sd: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.countries == 0 || self.days == 0 || self.topics_per_day == 0 {
            return fail("countries, days and topics_per_day must be positive".into());
        }
        if self.topics_per_day > crate::corpus::MAX_TOPICS {
            return fail(format!("topics_per_day {} exceeds 100", self.topics_per_day));
        }
        if self.topic_pool_sizes.len() != self.countries || self.reuse.len() != self.countries {
            return fail("pool sizes and reuse probabilities need one entry per country".into());
        }
        if let Some(p) = self.topic_pool_sizes.iter().find(|&&p| p < self.topics_per_day) {
            return fail(format!("pool size {p} is below topics_per_day {}", self.topics_per_day));
        }
        if let Some(r) = self.reuse.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return fail(format!("reuse probability {r} is outside [0, 1]"));
        }
        if !(self.noise_sd >= 0.0) || !self.coupling.is_finite() {
            return fail("noise_sd must be >= 0 and coupling finite".into());
        }
        Ok(())
    }
}

/// `n` distinct country codes: ISO codes first, then `X000`, `X001`, ...
pub fn synthetic_codes(n: usize) -> Vec<CountryCode> {
    iso::ISO_3166_ALPHA2
        .iter()
        .map(|c| c.to_string())
        .chain((0..).map(|i| format!("X{i:03}")))
        .take(n)
        .map(|c| CountryCode::new(&c).expect("non-empty code"))
        .collect()
}

pub(crate) fn days_from_start(n: usize) -> Vec<NaiveDate> {
    start_date().iter_days().take(n).collect()
}

/// Lazily named topics (and their fixed co-mention lists) of one country.
struct TopicTable {
    prefix: String,
    comentions: usize,
    ids: Vec<(TopicId, Vec<TopicId>)>,
}

impl TopicTable {
    fn new(prefix: String, comentions: usize) -> Self {
        TopicTable {
            prefix,
            comentions,
            ids: Vec::new(),
        }
    }

    fn mention(&mut self, index: usize, rank: u32) -> TopicMention {
        while self.ids.len() <= index {
            let name = format!("{}{}", self.prefix, self.ids.len());
            let co = (0..self.comentions)
                .map(|j| TopicId::new(&format!("{name}~{j}")).expect("non-empty"))
                .collect();
            self.ids.push((TopicId::new(&name).expect("non-empty"), co));
        }
        let (topic, comentions) = &self.ids[index];
        TopicMention {
            topic: topic.clone(),
            rank,
            comentions: comentions.clone(),
        }
    }
}

/// Draws each country's daily lists from its own topic pool. A slot takes
/// the next unused pool topic unless it is chosen (with the country's reuse
/// probability) to repeat a topic seen on an earlier day; once the pool is
/// exhausted every slot repeats. Pool size equal to `topics_per_day` forces
/// `U = k`; no reuse with a pool of at least `days * k` forces `U = days * k`.
pub fn gen_corpus(params: &SynthParams) -> Result<Corpus> {
    params.validate()?;
    let mut rng = rng(params.seed);
    let days = days_from_start(params.days);
    let k = params.topics_per_day;
    let mut snapshots = Vec::with_capacity(params.countries * params.days);

    for (c, code) in synthetic_codes(params.countries).into_iter().enumerate() {
        let pool = params.topic_pool_sizes[c];
        let reuse = params.reuse[c];
        let mut table = TopicTable::new(format!("{code}-t"), params.comentions);
        let mut seen: Vec<usize> = Vec::new();
        let mut next_fresh = 0;
        let mut picked = vec![false; pool];
        for &date in &days {
            let mut today: Vec<usize> = Vec::with_capacity(k);
            let seen_before = seen.len();
            let mut reused = 0;
            for _ in 0..k {
                let can_reuse = reused < seen_before;
                let fresh = next_fresh < pool;
                if can_reuse && (!fresh || rng.random::<f64>() < reuse) {
                    loop {
                        let t = seen[rng.random_range(0..seen_before)];
                        if !picked[t] {
                            picked[t] = true;
                            today.push(t);
                            break;
                        }
                    }
                    reused += 1;
                } else {
                    picked[next_fresh] = true;
                    today.push(next_fresh);
                    seen.push(next_fresh);
                    next_fresh += 1;
                }
            }
            for &t in &today {
                picked[t] = false;
            }
            today.shuffle(&mut rng);
            let mentions = today
                .iter()
                .enumerate()
                .map(|(i, &t)| table.mention(t, i as u32 + 1))
                .collect();
            snapshots.push(DailySnapshot::new(code.clone(), date, mentions)?);
        }
    }
    Ok(Corpus::from_snapshots(snapshots).0)
}

/// One-way random-effects variance estimates from the ANOVA decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OneWayVariance {
    pub sigma_b2: f64,
    pub sigma2: f64,
    /// Set when an estimate sits on the zero boundary.
    pub boundary: bool,
}

/// REML variance components for a balanced one-way layout with an
/// intercept-only mean: `sigma2 = MSW` and `sigma_b2 = (MSB - MSW) / n_per`
/// when `MSB >= MSW`. Otherwise the constrained optimum has `sigma_b2 = 0`
/// and `sigma2 = SST / (N - 1)`.
pub fn closed_form_oneway_reml<G: PartialEq + Clone>(y: &[f64], groups: &[G]) -> Result<OneWayVariance> {
    if y.len() != groups.len() {
        return Err(Error::Shape(format!("{} values for {} labels", y.len(), groups.len())));
    }
    let mut labels: Vec<G> = Vec::new();
    let mut members: Vec<Vec<f64>> = Vec::new();
    for (v, g) in y.iter().zip(groups) {
        match labels.iter().position(|l| l == g) {
            Some(i) => members[i].push(*v),
            None => {
                labels.push(g.clone());
                members.push(vec![*v]);
            }
        }
    }
    let q = members.len();
    let n_per = members.first().map_or(0, Vec::len);
    if q < 2 || n_per < 2 || members.iter().any(|m| m.len() != n_per) {
        return Err(Error::Validation(
            "closed form needs at least 2 groups of equal size >= 2".into(),
        ));
    }
    let total = (q * n_per) as f64;
    let grand = y.iter().sum::<f64>() / total;
    let mut ssw = 0.0;
    let mut ssb = 0.0;
    for m in &members {
        let mean = m.iter().sum::<f64>() / n_per as f64;
        ssw += m.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        ssb += n_per as f64 * (mean - grand).powi(2);
    }
    let msw = ssw / (q * (n_per - 1)) as f64;
    let msb = ssb / (q - 1) as f64;
    Ok(if msb >= msw {
        OneWayVariance {
            sigma_b2: (msb - msw) / n_per as f64,
            sigma2: msw,
            boundary: msw == 0.0 || msb == msw,
        }
    } else {
        OneWayVariance {
            sigma_b2: 0.0,
            sigma2: (ssw + ssb) / (total - 1.0),
            boundary: true,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Preset {
    /// 196 countries over 211 observed days, with planted
    /// survival counts and extreme diversity values.
    PaperShape,
    /// 2 countries over 3 days.
    Minimal,
    /// 196 countries, 217 days, 100 topics per day.
    Scale,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper-shape" | "paper_shape" => Ok(Preset::PaperShape),
            "minimal" => Ok(Preset::Minimal),
            "scale" => Ok(Preset::Scale),
            other => Err(Error::Validation(format!(
                "unknown preset {other:?}; expected paper-shape, minimal or scale"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::PaperShape => "paper-shape",
            Preset::Minimal => "minimal",
            Preset::Scale => "scale",
        })
    }
}

/// Default seed of the bundled fixtures.
pub const DEFAULT_SEED: u64 = 20160307;

/// Coupling planted by the presets.
pub const PLANTED_COUPLING: f64 = -35.08;

impl Preset {
    pub fn params(self, seed: u64) -> SynthParams {
        match self {
            Preset::Minimal => {
                let mut p = SynthParams::uniform(2, 3, 100, 150, 0.5, seed);
                p.coupling = PLANTED_COUPLING;
                p
            }
            Preset::Scale | Preset::PaperShape => {
                let mut r = rng(seed ^ 0x5ca1e);
                let countries = 196;
                let pools = (0..countries).map(|_| r.random_range(300..=6000)).collect();
                let reuse = (0..countries).map(|_| r.random_range(0.6..0.95)).collect();
                SynthParams {
                    countries,
                    days: 217,
                    topics_per_day: 100,
                    topic_pool_sizes: pools,
                    reuse,
                    comentions: 2,
                    coupling: PLANTED_COUPLING,
                    noise_sd: 4.0,
                    seed,
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub preset: Preset,
    pub seed: u64,
    pub corpus: Corpus,
    pub indicators: Vec<CountryIndicators>,
}

/// Builds a preset's corpus and indicator table.
pub fn generate(preset: Preset, seed: u64) -> Result<Fixture> {
    let (corpus, params) = match preset {
        Preset::PaperShape => {
            let corpus = paper_shape_corpus(seed)?;
            let mut params = IndicatorParams::paper_shape();
            params.coupling = PLANTED_COUPLING;
            (corpus, params)
        }
        Preset::Minimal | Preset::Scale => {
            let p = preset.params(seed);
            let corpus = gen_corpus(&p)?;
            let params = IndicatorParams {
                coupling: p.coupling,
                noise_sd: p.noise_sd,
                ..IndicatorParams::default()
            };
            (corpus, params)
        }
    };
    let basis = indicator_basis(&corpus, &params)?;
    let indicators = indicators_from_basis(&basis, &params, seed);
    Ok(Fixture {
        preset,
        seed,
        corpus,
        indicators,
    })
}

#[derive(Clone, Debug, Serialize)]
struct Marker<'a> {
    synthetic: bool,
    preset: String,
    seed: u64,
    rng: &'a str,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FixtureFiles {
    pub snapshots: PathBuf,
    pub indicators: PathBuf,
}

/// Writes `snapshots/*.jsonl` (with a synthetic marker) and
/// `indicators.csv` under `out`.
pub fn write_fixture(fixture: &Fixture, out: impl AsRef<Path>) -> Result<FixtureFiles> {
    let out = out.as_ref();
    let snapshots = out.join("snapshots");
    write_corpus(&fixture.corpus, &snapshots)?;
    let marker = Marker {
        synthetic: true,
        preset: fixture.preset.to_string(),
        seed: fixture.seed,
        rng: "ChaCha8 (rand_chacha), seed_from_u64",
    };
    let marker_path = snapshots.join(MARKER_FILE);
    fs::write(&marker_path, serde_json::to_string_pretty(&marker)? + "\n")
        .map_err(|e| Error::io(&marker_path, e))?;
    let indicators = out.join("indicators.csv");
    let file = fs::File::create(&indicators).map_err(|e| Error::io(&indicators, e))?;
    write_indicators(&fixture.indicators, std::io::BufWriter::new(file))?;
    Ok(FixtureFiles {
        snapshots,
        indicators,
    })
}

/// True when `path` (or its parent directory) carries the synthetic marker.
pub fn is_synthetic(path: &Path) -> bool {
    let dir = if path.is_dir() { Some(path) } else { path.parent() };
    dir.into_iter()
        .flat_map(|d| [Some(d), d.parent()])
        .flatten()
        .any(|d| d.join(MARKER_FILE).is_file())
}

//! Reference-shaped fixture: 196 countries observed on 211
//! of the 217 calendar days from 2016-03-07, with survival counts and
//! extreme diversity values planted exactly.
//!
//! Each snapshot is assembled from four rank bands (1-10, 11-50, 51-90,
//! 91-100) that draw from disjoint per-country topic namespaces, so the
//! number of distinct topics in a band can be fixed independently. With
//! every band complete on every day, `U(10)` is the band-1 count and
//! `U(90)` the sum over bands 1-3.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{days_from_start, rng};
use crate::corpus::{iso, CountryCode, Corpus, DailySnapshot, TopicId, TopicMention};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperShapeTargets {
    pub countries: usize,
    pub calendar_days: usize,
    pub observed_days: usize,
    /// `(k, |C^k|)`.
    pub survival: [(usize, usize); 3],
    /// Largest `U(90)`.
    pub max_u90: (&'static str, usize),
    /// Smallest `U(90)` in `C^90`.
    pub min_u90: (&'static str, usize),
    /// The five smallest `U(10)` values, ascending.
    pub bottom_u10: [(&'static str, usize); 5],
    /// Smallest subtopic diversity at `k = 10`, `l = 3`.
    pub min_subtopic_u10: (&'static str, usize),
    /// Countries of `C^90` without a PFI value.
    pub missing_pfi: usize,
}

pub const PAPER_SHAPE: PaperShapeTargets = PaperShapeTargets {
    countries: 196,
    calendar_days: 217,
    observed_days: 211,
    survival: [(10, 129), (90, 88), (100, 0)],
    max_u90: ("LU", 4012),
    min_u90: ("EG", 959),
    bottom_u10: [("YE", 86), ("IQ", 107), ("SA", 120), ("EG", 124), ("AE", 126)],
    min_subtopic_u10: ("YE", 795),
    missing_pfi: 8,
};

/// Offsets (from the first day) of calendar days with no snapshot at all.
const GLOBAL_GAPS: [usize; 6] = [23, 58, 97, 130, 164, 199];
const BANDS: [usize; 4] = [10, 40, 40, 10];
const COMENTIONS: usize = 3;
/// Countries whose snapshots reach depth 90 on every day (`C^90`).
const TIER_A: usize = 88;
/// Countries in `C^10` but not `C^90`.
const TIER_B: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tier {
    A,
    B,
    /// Shallow on at least one day (depth below 10).
    Shallow,
    /// Missing at least one observed day.
    Gaps,
}

#[derive(Debug)]
struct Plan {
    code: CountryCode,
    tier: Tier,
    /// Distinct topics per band.
    distinct: [usize; 4],
    /// Distinct (topic, co-mention) pairs in band 1.
    subtopics: usize,
    /// `(day index, depth)` for days shorter than 100.
    short: Vec<(usize, usize)>,
    missing: Vec<usize>,
}

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn interp_log(lo: f64, hi: f64, t: f64) -> usize {
    (lo.ln() + (hi.ln() - lo.ln()) * t).exp().round() as usize
}

fn country_list() -> Vec<CountryCode> {
    let special: Vec<&str> = ["EG", "LU", "AE", "SA", "YE", "IQ"].to_vec();
    special
        .iter()
        .copied()
        .chain(iso::ISO_3166_ALPHA2.iter().copied().filter(|c| !special.contains(c)))
        .take(PAPER_SHAPE.countries)
        .map(|c| CountryCode::new(c).expect("valid code"))
        .collect()
}

fn plans(rng: &mut ChaCha8Rng, days: usize) -> Vec<Plan> {
    let codes = country_list();
    let (special, rest) = codes.split_at(6);
    let mut rest = rest.to_vec();
    rest.shuffle(rng);
    let a_rest = TIER_A - 4;
    let b_rest = TIER_B - 2;
    let c_total = rest.len() - a_rest - b_rest;

    let mut assigned: Vec<(CountryCode, Tier)> = Vec::with_capacity(codes.len());
    for c in &special[..4] {
        assigned.push((c.clone(), Tier::A));
    }
    for c in &special[4..] {
        assigned.push((c.clone(), Tier::B));
    }
    for (i, c) in rest.into_iter().enumerate() {
        let tier = if i < a_rest {
            Tier::A
        } else if i < a_rest + b_rest {
            Tier::B
        } else if i < a_rest + b_rest + c_total / 2 + c_total % 2 {
            Tier::Shallow
        } else {
            Tier::Gaps
        };
        assigned.push((c, tier));
    }
    assigned.sort_by(|a, b| a.0.cmp(&b.0));

    let band1_occurrences = days * BANDS[0];
    assigned
        .into_iter()
        .map(|(code, tier)| {
            let z: f64 = StandardNormal.sample(rng);
            let e: f64 = StandardNormal.sample(rng);
            let openness = phi(z);
            let mut u90 = interp_log(960.0, 4000.0, openness).clamp(960, 4000);
            let mut u10 = (130.0 + 270.0 * phi(0.8 * z + 0.6 * e)).round() as usize;
            match code.as_str() {
                "LU" => (u10, u90) = (380, 4012),
                "EG" => (u10, u90) = (124, 959),
                "AE" => (u10, u90) = (126, 1100),
                "SA" => (u10, u90) = (120, 1050),
                "YE" => u10 = 86,
                "IQ" => u10 = 107,
                _ => {}
            }
            let band2 = (u90 - u10) / 2;
            let band3 = u90 - u10 - band2;
            let band4 = 10 + (openness * 200.0).round() as usize;
            let subtopics = if code.as_str() == "YE" {
                795
            } else {
                let jitter = 0.9 + 0.2 * rng.random::<f64>();
                ((9.25 * u10 as f64 * jitter).round() as usize)
                    .clamp(800, COMENTIONS * band1_occurrences)
            };

            let mut short = Vec::new();
            let mut missing = Vec::new();
            let pick_days = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
                index::sample(rng, days, n).into_vec()
            };
            match tier {
                Tier::A | Tier::B | Tier::Shallow => {
                    let (min, count) = match tier {
                        Tier::A => (rng.random_range(90..=99), rng.random_range(1..=5)),
                        Tier::B => (rng.random_range(10..=89), rng.random_range(1..=8)),
                        _ => (rng.random_range(1..=9), rng.random_range(1..=4)),
                    };
                    let chosen = pick_days(rng, count);
                    for (i, d) in chosen.into_iter().enumerate() {
                        let depth = if i == 0 { min } else { rng.random_range(min..=99) };
                        short.push((d, depth));
                    }
                }
                Tier::Gaps => {
                    let count = rng.random_range(1..=3);
                    missing = pick_days(rng, count);
                }
            }
            Plan {
                code,
                tier,
                distinct: [u10, band2, band3, band4],
                subtopics,
                short,
                missing,
            }
        })
        .collect()
}

/// Daily topic indices for one band with exactly `distinct` topics overall:
/// day 0 introduces `width` topics, the remaining new topics are spread over
/// later days with a slowly varying intensity, and all other slots repeat
/// distinct earlier topics.
fn plant_band(rng: &mut ChaCha8Rng, days: usize, width: usize, distinct: usize) -> Vec<Vec<u32>> {
    assert!(distinct >= width && distinct <= width * days, "band target out of range");
    let extra = distinct - width;
    let period = rng.random_range(40.0..120.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let weights: Vec<f64> = (1..days)
        .map(|j| {
            let wave = (0.6 * (std::f64::consts::TAU * j as f64 / period + phase).sin()).exp();
            wave * (0.5 + rng.random::<f64>())
        })
        .collect();
    let total: f64 = weights.iter().sum();

    let mut fresh = vec![0usize; days];
    let mut introduced = 0;
    let mut cum = 0.0;
    for (j, w) in weights.iter().enumerate() {
        cum += w;
        let target = ((extra as f64) * cum / total).round() as usize;
        let e = target.saturating_sub(introduced).min(width);
        fresh[j + 1] = e;
        introduced += e;
    }
    for j in (1..days).rev() {
        if introduced == extra {
            break;
        }
        let add = (width - fresh[j]).min(extra - introduced);
        fresh[j] += add;
        introduced += add;
    }

    let mut next = 0u32;
    let mut out = Vec::with_capacity(days);
    for &e in &fresh {
        let e = if out.is_empty() { width } else { e };
        let seen = next as usize;
        let mut day: Vec<u32> = index::sample(rng, seen, (width - e).min(seen))
            .into_iter()
            .map(|i| i as u32)
            .collect();
        day.extend(next..next + e as u32);
        next += e as u32;
        day.shuffle(rng);
        out.push(day);
    }
    debug_assert_eq!(next as usize, distinct);
    out
}

/// Co-mention pool sizes for band-1 topics so that the distinct pairs sum to
/// `target`. Topic `t` seen `o_t` times contributes `min(p_t, 3 o_t)` pairs.
fn pool_sizes(occurrences: &[usize], target: usize) -> Vec<usize> {
    let caps: Vec<usize> = occurrences.iter().map(|o| COMENTIONS * o).collect();
    let mut pools = vec![COMENTIONS; occurrences.len()];
    let mut remaining = target.saturating_sub(COMENTIONS * occurrences.len());
    while remaining > 0 {
        let mut progressed = false;
        for (p, cap) in pools.iter_mut().zip(&caps) {
            if remaining == 0 {
                break;
            }
            if *p < *cap {
                *p += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        assert!(progressed, "subtopic target exceeds capacity");
    }
    pools
}

struct BandTopics {
    ids: Vec<TopicId>,
    comention_pools: Vec<Vec<TopicId>>,
}

impl BandTopics {
    fn new(prefix: &str, pools: &[usize]) -> Self {
        let ids: Vec<TopicId> = (0..pools.len())
            .map(|t| TopicId::new(&format!("{prefix}{t}")).expect("non-empty"))
            .collect();
        let comention_pools = ids
            .iter()
            .zip(pools)
            .map(|(id, &p)| {
                (0..p)
                    .map(|i| TopicId::new(&format!("{id}~{i}")).expect("non-empty"))
                    .collect()
            })
            .collect();
        BandTopics {
            ids,
            comention_pools,
        }
    }
}

/// Builds the paper-shape corpus for `seed`.
pub fn paper_shape_corpus(seed: u64) -> Result<Corpus> {
    let mut rng = rng(seed);
    let calendar = days_from_start(PAPER_SHAPE.calendar_days);
    let observed: Vec<_> = calendar
        .iter()
        .enumerate()
        .filter(|(i, _)| !GLOBAL_GAPS.contains(i))
        .map(|(_, d)| *d)
        .collect();
    let days = observed.len();
    let plans = plans(&mut rng, days);

    let mut snapshots = Vec::with_capacity(plans.len() * days);
    for plan in &plans {
        let bands: Vec<Vec<Vec<u32>>> = BANDS
            .iter()
            .zip(&plan.distinct)
            .map(|(&w, &d)| plant_band(&mut rng, days, w, d))
            .collect();
        let topics: Vec<BandTopics> = bands
            .iter()
            .enumerate()
            .map(|(b, band)| {
                let mut occurrences = vec![0usize; plan.distinct[b]];
                for t in band.iter().flatten() {
                    occurrences[*t as usize] += 1;
                }
                let pools = if b == 0 {
                    pool_sizes(&occurrences, plan.subtopics)
                } else {
                    occurrences
                        .iter()
                        .enumerate()
                        .map(|(t, &o)| (COMENTIONS + t % 4).min(COMENTIONS * o))
                        .collect()
                };
                BandTopics::new(&format!("{}.{}.", plan.code, b + 1), &pools)
            })
            .collect();

        let mut seen_count: Vec<Vec<usize>> =
            plan.distinct.iter().map(|&d| vec![0usize; d]).collect();
        for (d, date) in observed.iter().enumerate() {
            let depth = plan
                .short
                .iter()
                .find(|(day, _)| *day == d)
                .map_or(100, |&(_, depth)| depth);
            let mut mentions = Vec::with_capacity(100);
            for (b, band) in bands.iter().enumerate() {
                for &t in &band[d] {
                    let t = t as usize;
                    let pool = &topics[b].comention_pools[t];
                    let j = seen_count[b][t];
                    seen_count[b][t] += 1;
                    let comentions = (0..COMENTIONS)
                        .map(|i| pool[(COMENTIONS * j + i) % pool.len()].clone())
                        .collect();
                    mentions.push(TopicMention {
                        topic: topics[b].ids[t].clone(),
                        rank: mentions.len() as u32 + 1,
                        comentions,
                    });
                }
            }
            if plan.missing.contains(&d) {
                continue;
            }
            mentions.truncate(depth);
            snapshots.push(DailySnapshot::new(plan.code.clone(), *date, mentions)?);
        }
        debug_assert!(plan.tier != Tier::Gaps || !plan.missing.is_empty());
    }
    Ok(Corpus::from_snapshots(snapshots).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn band_has_planted_distinct_count() {
        let mut r = rng(4);
        for (w, d) in [(10, 10), (10, 86), (40, 418), (40, 3000), (10, 2110)] {
            let band = plant_band(&mut r, 211, w, d);
            assert!(band.iter().all(|day| day.len() == w));
            assert!(band.iter().all(|day| day.iter().collect::<HashSet<_>>().len() == w));
            let all: HashSet<u32> = band.iter().flatten().copied().collect();
            assert_eq!(all.len(), d, "width {w}");
        }
    }

    #[test]
    fn pools_hit_target() {
        let occ = [1, 5, 2, 40];
        let pools = pool_sizes(&occ, 100);
        let pairs: usize = pools.iter().zip(&occ).map(|(p, o)| (*p).min(3 * o)).sum();
        assert_eq!(pairs, 100);
        assert!(pools.iter().all(|&p| p >= 3));
    }

    #[test]
    fn tier_sizes() {
        let p = plans(&mut rng(1), 211);
        assert_eq!(p.len(), 196);
        assert_eq!(p.iter().filter(|p| p.tier == Tier::A).count(), 88);
        assert_eq!(p.iter().filter(|p| p.tier == Tier::B).count(), 41);
        let codes: HashSet<_> = p.iter().map(|p| p.code.clone()).collect();
        assert_eq!(codes.len(), 196);
    }
}

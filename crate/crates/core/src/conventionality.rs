//! Conventionality of cited-venue combinations.
//!
//! Every citing paper contributes one `(venue_i, venue_j, year)` entry per
//! unordered pair of distinct venues it cites. The null model shuffles the
//! `venue_j` column within each publication year, which keeps both the
//! per-venue citation totals and the year structure intact, and tallies how
//! often each pair co-occurs. Pair counts are aggregated over the whole
//! corpus; a paper's score is the nearest-rank 10th percentile of the
//! z-scores of its pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationGraph, PaperRecord};
use crate::embedding::percentile_threshold;
use crate::error::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const SCORE_PERCENTILE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VenuePairObservation {
    pub venue_i: String,
    pub venue_j: String,
    pub year: i32,
    pub count: u32,
}

impl VenuePairObservation {
    /// Builds a canonically ordered observation (`venue_i <= venue_j`).
    pub fn new(a: &str, b: &str, year: i32, count: u32) -> Self {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        VenuePairObservation {
            venue_i: i.to_owned(),
            venue_j: j.to_owned(),
            year,
            count,
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.venue_i, &self.venue_j)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairExtraction {
    pub pairs: Vec<VenuePairObservation>,
    /// References whose venue could not be resolved.
    pub unresolved: usize,
}

/// Venue pairs cited together by `paper`. Venues are taken from distinct
/// references; a venue cited at least twice also yields a self-pair when
/// `include_self_pairs` is set.
pub fn extract_venue_pairs(
    paper: &PaperRecord,
    graph: &CitationGraph,
    venue_of: &HashMap<String, String>,
    include_self_pairs: bool,
) -> PairExtraction {
    let mut per_venue: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unresolved = 0;
    for r in graph
        .references(&paper.paper_id)
        .chain(graph.external_references(&paper.paper_id))
    {
        match venue_of.get(r).filter(|v| !v.is_empty()) {
            Some(v) => *per_venue.entry(v.as_str()).or_default() += 1,
            None => unresolved += 1,
        }
    }
    let resolved: usize = per_venue.values().sum();
    let mut pairs = Vec::new();
    if resolved >= 2 {
        let venues: Vec<(&str, usize)> = per_venue.into_iter().collect();
        for (a, &(va, na)) in venues.iter().enumerate() {
            if include_self_pairs && na >= 2 {
                pairs.push(VenuePairObservation::new(va, va, paper.year, 1));
            }
            for &(vb, _) in &venues[a + 1..] {
                pairs.push(VenuePairObservation::new(va, vb, paper.year, 1));
            }
        }
    }
    PairExtraction { pairs, unresolved }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub iterations: usize,
    pub mean: f64,
    /// Sample standard deviation over iterations.
    pub stddev: f64,
}

/// Observation rows interned and grouped by year, ready to be shuffled.
#[derive(Debug, Clone)]
pub struct PermutationPlan {
    venues: Vec<String>,
    /// `(year, venue_i column, venue_j column)`, years ascending.
    strata: Vec<(i32, Vec<u32>, Vec<u32>)>,
    seed: u64,
}

impl PermutationPlan {
    pub fn new(observations: &[VenuePairObservation], seed: u64) -> Self {
        let names: BTreeSet<&str> = observations
            .iter()
            .flat_map(|o| [o.venue_i.as_str(), o.venue_j.as_str()])
            .collect();
        let venues: Vec<String> = names.into_iter().map(str::to_owned).collect();
        let id: HashMap<&str, u32> = venues.iter().enumerate().map(|(i, v)| (v.as_str(), i as u32)).collect();
        let mut by_year: BTreeMap<i32, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
        for o in observations {
            let e = by_year.entry(o.year).or_default();
            for _ in 0..o.count {
                e.0.push(id[o.venue_i.as_str()]);
                e.1.push(id[o.venue_j.as_str()]);
            }
        }
        PermutationPlan {
            venues,
            strata: by_year.into_iter().map(|(y, (i, j))| (y, i, j)).collect(),
            seed,
        }
    }

    pub fn venue_name(&self, id: u32) -> &str {
        &self.venues[id as usize]
    }

    pub fn rows(&self) -> usize {
        self.strata.iter().map(|s| s.1.len()).sum()
    }

    fn rng(&self, iteration: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(iteration as u64);
        rng
    }

    /// The `venue_j` column of every stratum after the shuffle of
    /// `iteration`. Each iteration draws from its own RNG stream, so the
    /// result does not depend on which thread runs it.
    pub fn permuted_columns(&self, iteration: usize) -> Vec<(i32, Vec<u32>)> {
        let mut rng = self.rng(iteration);
        self.strata
            .iter()
            .map(|(y, _, j)| {
                let mut col = j.clone();
                col.shuffle(&mut rng);
                (*y, col)
            })
            .collect()
    }

    /// Original `venue_j` columns per year.
    pub fn original_columns(&self) -> Vec<(i32, Vec<u32>)> {
        self.strata.iter().map(|(y, _, j)| (*y, j.clone())).collect()
    }

    fn tally(&self, iteration: usize, index: &HashMap<(u32, u32), usize>, counts: &mut [u64]) {
        counts.iter_mut().for_each(|c| *c = 0);
        for ((_, vi, _), (_, vj)) in self.strata.iter().zip(self.permuted_columns(iteration)) {
            for (&a, &b) in vi.iter().zip(&vj) {
                let key = if a <= b { (a, b) } else { (b, a) };
                if let Some(&k) = index.get(&key) {
                    counts[k] += 1;
                }
            }
        }
    }
}

/// Observed counts and null statistics for every observed pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub iterations: usize,
    pub seed: u64,
    pub pairs: BTreeMap<(String, String), (u64, NullDistribution)>,
}

impl NullModel {
    pub fn get(&self, a: &str, b: &str) -> Option<&(u64, NullDistribution)> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pairs.get(&(key.0.to_owned(), key.1.to_owned()))
    }
}

/// Runs `iterations` year-stratified shuffles of the `venue_j` column.
/// Tallies are summed as integers, so results are bit-identical for any
/// thread count.
pub fn permute_null(observations: &[VenuePairObservation], iterations: usize, seed: u64) -> Result<NullModel> {
    if iterations < 2 {
        return Err(Error::invalid("the null model needs at least two iterations"));
    }
    let plan = PermutationPlan::new(observations, seed);
    let mut observed: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (_, vi, vj) in &plan.strata {
        for (&a, &b) in vi.iter().zip(vj) {
            *observed.entry(if a <= b { (a, b) } else { (b, a) }).or_default() += 1;
        }
    }
    let keys: Vec<(u32, u32)> = observed.keys().copied().collect();
    let index: HashMap<(u32, u32), usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let npairs = keys.len();

    let (sum, sumsq) = (0..iterations)
        .into_par_iter()
        .fold(
            || (vec![0u64; npairs], vec![0u128; npairs], vec![0u64; npairs]),
            |(mut s, mut s2, mut buf), it| {
                plan.tally(it, &index, &mut buf);
                for k in 0..npairs {
                    s[k] += buf[k];
                    s2[k] += (buf[k] as u128) * (buf[k] as u128);
                }
                (s, s2, buf)
            },
        )
        .map(|(s, s2, _)| (s, s2))
        .reduce(
            || (vec![0u64; npairs], vec![0u128; npairs]),
            |(mut a, mut a2), (b, b2)| {
                for k in 0..npairs {
                    a[k] += b[k];
                    a2[k] += b2[k];
                }
                (a, a2)
            },
        );

    let n = iterations as u128;
    let pairs = keys
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let s = sum[k] as u128;
            // n * sumsq - sum^2 >= 0 exactly (Cauchy-Schwarz)
            let var_num = n * sumsq[k] - s * s;
            let var = var_num as f64 / (n * (n - 1)) as f64;
            let dist = NullDistribution {
                iterations,
                mean: s as f64 / n as f64,
                stddev: var.sqrt(),
            };
            (
                (plan.venue_name(a).to_owned(), plan.venue_name(b).to_owned()),
                (observed[&(a, b)], dist),
            )
        })
        .collect();
    Ok(NullModel {
        iterations,
        seed,
        pairs,
    })
}

/// `(observed - mean) / stddev`; a zero-variance null has no z.
pub fn pair_z(observed: u64, null: &NullDistribution) -> Result<f64> {
    if !(null.stddev > 0.0) {
        return Err(Error::degenerate("null standard deviation is zero"));
    }
    Ok((observed as f64 - null.mean) / null.stddev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionalityScore {
    pub paper_id: String,
    pub pair_z: Vec<f64>,
    pub tenth_percentile_z: f64,
}

impl ConventionalityScore {
    /// Scores below zero mark unconventional combinations.
    pub fn is_conventional(&self) -> bool {
        self.tenth_percentile_z > 0.0
    }
}

pub fn paper_score(paper_id: &str, pair_z: Vec<f64>) -> Result<ConventionalityScore> {
    if pair_z.is_empty() {
        return Err(Error::degenerate(format!("paper `{paper_id}` has no scorable pairs")));
    }
    let tenth = percentile_threshold(&pair_z, SCORE_PERCENTILE)?;
    Ok(ConventionalityScore {
        paper_id: paper_id.to_owned(),
        pair_z,
        tenth_percentile_z: tenth,
    })
}

/// Per-paper output row; `score` is `None` when every pair was excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperConventionality {
    pub paper_id: String,
    pub score: Option<ConventionalityScore>,
    pub n_pairs: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConventionalityConfig {
    pub iterations: usize,
    pub include_self_pairs: bool,
}

impl Default for ConventionalityConfig {
    fn default() -> Self {
        ConventionalityConfig {
            iterations: DEFAULT_ITERATIONS,
            include_self_pairs: false,
        }
    }
}

/// Full analysis: pairs from every paper in `papers` feed the null; the
/// papers in `score_ids` are scored.
pub fn analyze(
    papers: &[PaperRecord],
    graph: &CitationGraph,
    score_ids: &[&str],
    cfg: &ConventionalityConfig,
    seed: u64,
) -> Result<(NullModel, Vec<PaperConventionality>)> {
    let venue_of: HashMap<String, String> = papers.iter().map(|p| (p.paper_id.clone(), p.venue.clone())).collect();
    let per_paper: HashMap<&str, PairExtraction> = papers
        .par_iter()
        .map(|p| (p.paper_id.as_str(), extract_venue_pairs(p, graph, &venue_of, cfg.include_self_pairs)))
        .collect();
    let mut observations: Vec<VenuePairObservation> = per_paper.values().flat_map(|e| e.pairs.iter().cloned()).collect();
    observations.sort();
    let model = permute_null(&observations, cfg.iterations, seed)?;
    let rows = score_ids
        .iter()
        .map(|&id| {
            let pairs = per_paper.get(id).map(|e| e.pairs.as_slice()).unwrap_or(&[]);
            let zs: Vec<f64> = pairs
                .iter()
                .filter_map(|o| {
                    let (obs, null) = model.get(&o.venue_i, &o.venue_j)?;
                    pair_z(*obs, null).ok()
                })
                .collect();
            let n_excluded = pairs.len() - zs.len();
            PaperConventionality {
                paper_id: id.to_owned(),
                n_pairs: pairs.len(),
                n_excluded,
                score: paper_score(id, zs).ok(),
            }
        })
        .collect();
    Ok((model, rows))
}

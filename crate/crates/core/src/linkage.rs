//! Paper-to-patent and paper-to-repository linkage.
//!
//! Patent references are matched to papers by title-vector distance, then
//! confirmed by fuzzy author-name agreement. Thresholds are either fixed or
//! picked from the knee of the matches-versus-threshold curve.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub use crate::corpus::LinkKind;
use crate::corpus::{PaperRecord, PatentCorpus, RepoLink};
use crate::embedding::{keys, VectorStore};
use crate::error::{Error, Result};

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - d(a, b) / max(|a|, |b|)`, with two empty strings scoring 1.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Lowercase, strip diacritics, turn punctuation into spaces and collapse
/// whitespace. Initials are left as they are.
pub fn normalize_name(name: &str) -> String {
    let folded: String = name
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub patent_id: String,
    pub ref_index: usize,
    pub paper_id: String,
    pub title_distance: f64,
    pub author_similarity: f64,
    pub verified: bool,
    /// Set when either author list was empty, so no check was possible.
    pub author_flag: bool,
}

/// Match counts at increasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    grid: Vec<f64>,
    counts: Vec<usize>,
}

impl ElbowCurve {
    pub fn new(grid: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if grid.len() != counts.len() {
            return Err(Error::invalid("grid and counts differ in length"));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if counts.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("counts must be non-decreasing"));
        }
        Ok(ElbowCurve { grid, counts })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Counts the values `<= g` for every grid point `g`.
    pub fn from_values(grid: Vec<f64>, values: &[f64]) -> Result<Self> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let counts = grid
            .iter()
            .map(|&g| sorted.partition_point(|&v| v <= g))
            .collect();
        ElbowCurve::new(grid, counts)
    }
}

/// Grid point farthest from the chord joining the curve's endpoints, with
/// both axes min-max normalized. Earliest point wins ties.
pub fn detect_elbow(curve: &ElbowCurve) -> Result<f64> {
    let (g, c) = (&curve.grid, &curve.counts);
    let n = g.len();
    if n < 3 {
        return Err(Error::NoElbow("fewer than 3 grid points".into()));
    }
    let (c0, c1) = (c[0] as f64, c[n - 1] as f64);
    if c0 == c1 {
        return Err(Error::NoElbow("counts are constant".into()));
    }
    let (g0, g1) = (g[0], g[n - 1]);
    let mut best = (0usize, 0.0f64);
    for i in 1..n - 1 {
        let x = (g[i] - g0) / (g1 - g0);
        let y = (c[i] as f64 - c0) / (c1 - c0);
        // chord is y = x; perpendicular distance |x - y| / sqrt(2)
        let d = (x - y).abs() / std::f64::consts::SQRT_2;
        if d > best.1 {
            best = (i, d);
        }
    }
    if best.1 <= 1e-12 {
        return Err(Error::NoElbow("curve is collinear".into()));
    }
    Ok(g[best.0])
}

/// `start, start + step, ..., stop`, rounded to 12 decimals.
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start {
        return Err(Error::invalid("bad grid specification"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// One NPL reference to be matched.
#[derive(Debug, Clone, Copy)]
pub struct RefSlot<'a> {
    pub patent_id: &'a str,
    pub index: usize,
    pub authors: &'a [String],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TitleMatchReport {
    pub refs_skipped: usize,
    pub papers_skipped: usize,
}

/// All (reference, paper) pairs whose title distance `1 - cos` is within
/// `threshold`. Within a reference, pairs are ordered nearest first (ties by
/// paper id). References or papers without a title vector are skipped.
pub fn match_titles<S: AsRef<str> + Sync>(
    refs: &[RefSlot<'_>],
    paper_ids: &[S],
    store: &VectorStore,
    threshold: f64,
) -> (Vec<CandidateMatch>, TitleMatchReport) {
    let mut report = TitleMatchReport::default();
    let papers: Vec<(&str, &[f32])> = paper_ids
        .iter()
        .filter_map(|id| {
            let id = id.as_ref();
            let v = store.get(&keys::title(id));
            if v.is_none() {
                report.papers_skipped += 1;
            }
            v.map(|v| (id, v))
        })
        .collect();
    let per_ref: Vec<Option<Vec<CandidateMatch>>> = refs
        .par_iter()
        .map(|r| {
            let q = store.get(&keys::reference(r.patent_id, r.index))?;
            let mut hits: Vec<CandidateMatch> = papers
                .iter()
                .filter_map(|&(pid, v)| {
                    let sim: f64 = q.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
                    let d = 1.0 - sim.clamp(-1.0, 1.0);
                    (d <= threshold).then(|| CandidateMatch {
                        patent_id: r.patent_id.to_owned(),
                        ref_index: r.index,
                        paper_id: pid.to_owned(),
                        title_distance: d,
                        author_similarity: 0.0,
                        verified: false,
                        author_flag: false,
                    })
                })
                .collect();
            hits.sort_by(|a, b| {
                a.title_distance
                    .total_cmp(&b.title_distance)
                    .then_with(|| a.paper_id.cmp(&b.paper_id))
            });
            Some(hits)
        })
        .collect();
    let mut out = Vec::new();
    for hits in per_ref {
        match hits {
            Some(h) => out.extend(h),
            None => report.refs_skipped += 1,
        }
    }
    (out, report)
}

/// Best normalized-Levenshtein agreement over all author pairs, or `None`
/// when either list is empty.
pub fn author_similarity(paper_authors: &[String], ref_authors: &[String]) -> Option<f64> {
    if paper_authors.is_empty() || ref_authors.is_empty() {
        return None;
    }
    let left: Vec<String> = paper_authors.iter().map(|a| normalize_name(a)).collect();
    let right: Vec<String> = ref_authors.iter().map(|a| normalize_name(a)).collect();
    let mut best = 0.0f64;
    for a in &left {
        for b in &right {
            best = best.max(normalized_levenshtein(a, b));
        }
    }
    Some(best)
}

/// Scores the candidate's authors; verified iff the best pair similarity is
/// strictly above `sim_threshold`.
pub fn verify_authors(
    mut candidate: CandidateMatch,
    paper_authors: &[String],
    ref_authors: &[String],
    sim_threshold: f64,
) -> CandidateMatch {
    match author_similarity(paper_authors, ref_authors) {
        Some(s) => {
            candidate.author_similarity = s;
            candidate.author_flag = false;
            candidate.verified = s > sim_threshold;
        }
        None => {
            candidate.author_similarity = 0.0;
            candidate.author_flag = true;
            candidate.verified = false;
        }
    }
    candidate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// Either a fixed threshold or `"auto"` (elbow of the matching curve).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Fixed(f64),
    Auto(AutoTag),
}

impl Threshold {
    pub const AUTO: Threshold = Threshold::Auto(AutoTag::Auto);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageConfig {
    pub title_threshold: Threshold,
    pub author_threshold: Threshold,
    /// `[start, stop, step]` of title distances scanned in auto mode.
    pub title_grid: [f64; 3],
    /// `[start, stop, step]` of author dissimilarities (`1 - similarity`)
    /// scanned in auto mode.
    pub author_grid: [f64; 3],
    pub horizon_year: i32,
}

pub const DEFAULT_TITLE_THRESHOLD: f64 = 0.06;
pub const DEFAULT_AUTHOR_THRESHOLD: f64 = 0.8;

impl Default for LinkageConfig {
    fn default() -> Self {
        LinkageConfig {
            title_threshold: Threshold::Fixed(DEFAULT_TITLE_THRESHOLD),
            author_threshold: Threshold::Fixed(DEFAULT_AUTHOR_THRESHOLD),
            title_grid: [0.0, 0.20, 0.01],
            author_grid: [0.0, 0.5, 0.01],
            horizon_year: 2022,
        }
    }
}

/// Years from publication to the first link, or the censoring time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstEvent {
    pub time: u32,
    /// `false` when right-censored at the horizon.
    pub observed: bool,
    /// The raw lag was negative and was clamped to 0.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEdge {
    pub paper_id: String,
    pub target_id: String,
    pub title_distance: Option<f64>,
    pub author_similarity: Option<f64>,
    /// Lag in whole years from paper to this target (clamped at 0).
    pub event_time: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkageStats {
    pub refs_considered: usize,
    pub refs_skipped: usize,
    pub papers_skipped: usize,
    pub candidates: usize,
    pub author_flagged: usize,
    pub clamped_edges: usize,
    pub unknown_papers: usize,
    pub title_threshold: Option<f64>,
    pub author_threshold: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageResult {
    pub kind: LinkKind,
    pub horizon_year: i32,
    /// Sorted by `(paper_id, target_id)`.
    pub edges: Vec<LinkEdge>,
    pub first_events: BTreeMap<String, FirstEvent>,
    pub stats: LinkageStats,
}

impl LinkageResult {
    pub fn edge_set(&self) -> BTreeSet<(&str, &str)> {
        self.edges
            .iter()
            .map(|e| (e.paper_id.as_str(), e.target_id.as_str()))
            .collect()
    }

    /// Papers with at least one edge.
    pub fn linked_papers(&self) -> BTreeSet<&str> {
        self.edges.iter().map(|e| e.paper_id.as_str()).collect()
    }

    /// `(time, observed)` rows for survival analysis over `paper_ids`.
    pub fn survival_rows<'a>(&self, paper_ids: impl IntoIterator<Item = &'a str>) -> Vec<(f64, bool)> {
        paper_ids
            .into_iter()
            .filter_map(|id| self.first_events.get(id))
            .map(|e| (e.time as f64, e.observed))
            .collect()
    }
}

fn first_events(
    papers: &[&PaperRecord],
    edges: &[LinkEdge],
    target_year: &dyn Fn(&str) -> i32,
    horizon: i32,
) -> BTreeMap<String, FirstEvent> {
    let mut earliest: HashMap<&str, i32> = HashMap::new();
    for e in edges {
        let y = target_year(&e.target_id);
        earliest
            .entry(e.paper_id.as_str())
            .and_modify(|cur| *cur = (*cur).min(y))
            .or_insert(y);
    }
    papers
        .iter()
        .map(|p| {
            let censor = (horizon - p.year).max(0) as u32;
            let ev = match earliest.get(p.paper_id.as_str()) {
                Some(&y) if y <= horizon => {
                    let lag = y - p.year;
                    FirstEvent {
                        time: lag.max(0) as u32,
                        observed: true,
                        clamped: lag < 0,
                    }
                }
                _ => FirstEvent {
                    time: censor,
                    observed: false,
                    clamped: false,
                },
            };
            (p.paper_id.clone(), ev)
        })
        .collect()
}

fn author_names(p: &PaperRecord) -> Vec<String> {
    p.authors.iter().map(|a| a.name.clone()).collect()
}

/// Links papers to the patents whose NPL references match them.
pub fn link_patents(
    papers: &[&PaperRecord],
    patents: &PatentCorpus,
    store: &VectorStore,
    cfg: &LinkageConfig,
) -> Result<LinkageResult> {
    let mut stats = LinkageStats::default();
    let refs: Vec<RefSlot<'_>> = patents
        .patents()
        .iter()
        .flat_map(|p| {
            p.npl_refs
                .iter()
                .enumerate()
                .filter(|(_, r)| r.is_linkable())
                .map(move |(i, r)| RefSlot {
                    patent_id: &p.patent_id,
                    index: i,
                    authors: &r.extracted_authors,
                })
        })
        .collect();
    stats.refs_considered = refs.len();

    let title_grid = grid(cfg.title_grid[0], cfg.title_grid[1], cfg.title_grid[2])?;
    let scan_cutoff = match cfg.title_threshold {
        Threshold::Fixed(t) => t,
        Threshold::Auto(_) => *title_grid.last().expect("non-empty grid"),
    };
    let ids: Vec<&str> = papers.iter().map(|p| p.paper_id.as_str()).collect();
    let (candidates, report) = match_titles(&refs, &ids, store, scan_cutoff);
    stats.refs_skipped = report.refs_skipped;
    stats.papers_skipped = report.papers_skipped;

    let title_thr = match cfg.title_threshold {
        Threshold::Fixed(t) => t,
        Threshold::Auto(_) => {
            let d: Vec<f64> = candidates.iter().map(|c| c.title_distance).collect();
            let curve = ElbowCurve::from_values(title_grid, &d)?;
            detect_elbow(&curve).unwrap_or_else(|e| {
                stats
                    .notes
                    .push(format!("title elbow unavailable ({e}); using {DEFAULT_TITLE_THRESHOLD}"));
                DEFAULT_TITLE_THRESHOLD
            })
        }
    };
    stats.title_threshold = Some(title_thr);

    let by_id: HashMap<&str, &PaperRecord> = papers.iter().map(|p| (p.paper_id.as_str(), *p)).collect();
    let ref_authors: HashMap<(&str, usize), &[String]> =
        refs.iter().map(|r| ((r.patent_id, r.index), r.authors)).collect();
    let scored: Vec<CandidateMatch> = candidates
        .into_par_iter()
        .filter(|c| c.title_distance <= title_thr)
        .map(|c| {
            let pa = author_names(by_id[c.paper_id.as_str()]);
            let ra = ref_authors[&(c.patent_id.as_str(), c.ref_index)];
            verify_authors(c, &pa, ra, 1.0)
        })
        .collect();
    stats.candidates = scored.len();
    stats.author_flagged = scored.iter().filter(|c| c.author_flag).count();

    let author_thr = match cfg.author_threshold {
        Threshold::Fixed(t) => t,
        Threshold::Auto(_) => {
            let g = grid(cfg.author_grid[0], cfg.author_grid[1], cfg.author_grid[2])?;
            // count(d) = #{similarity > 1 - d}
            let counts = g
                .iter()
                .map(|&d| {
                    scored
                        .iter()
                        .filter(|c| !c.author_flag && c.author_similarity > 1.0 - d)
                        .count()
                })
                .collect();
            let curve = ElbowCurve::new(g, counts)?;
            match detect_elbow(&curve) {
                Ok(d) => 1.0 - d,
                Err(e) => {
                    stats
                        .notes
                        .push(format!("author elbow unavailable ({e}); using {DEFAULT_AUTHOR_THRESHOLD}"));
                    DEFAULT_AUTHOR_THRESHOLD
                }
            }
        }
    };
    stats.author_threshold = Some(author_thr);

    // Best verified paper per reference.
    let mut best: BTreeMap<(&str, usize), &CandidateMatch> = BTreeMap::new();
    for c in scored.iter().filter(|c| !c.author_flag && c.author_similarity > author_thr) {
        let key = (c.patent_id.as_str(), c.ref_index);
        let replace = match best.get(&key) {
            None => true,
            Some(cur) => (c.title_distance, &c.paper_id) < (cur.title_distance, &cur.paper_id),
        };
        if replace {
            best.insert(key, c);
        }
    }
    let mut edges: BTreeMap<(String, String), LinkEdge> = BTreeMap::new();
    for c in best.values() {
        let paper = by_id[c.paper_id.as_str()];
        let year = patents.get(&c.patent_id).expect("patent exists").year();
        let lag = year - paper.year;
        let edge = LinkEdge {
            paper_id: c.paper_id.clone(),
            target_id: c.patent_id.clone(),
            title_distance: Some(c.title_distance),
            author_similarity: Some(c.author_similarity),
            event_time: lag.max(0) as u32,
        };
        let key = (edge.paper_id.clone(), edge.target_id.clone());
        match edges.get(&key) {
            Some(cur) if cur.title_distance <= edge.title_distance => {}
            _ => {
                edges.insert(key, edge);
            }
        }
    }
    let edges: Vec<LinkEdge> = edges.into_values().collect();
    stats.clamped_edges = edges
        .iter()
        .filter(|e| patents.get(&e.target_id).unwrap().year() < by_id[e.paper_id.as_str()].year)
        .count();
    let first = first_events(
        papers,
        &edges,
        &|t| patents.get(t).map(|p| p.year()).unwrap_or(i32::MAX),
        cfg.horizon_year,
    );
    Ok(LinkageResult {
        kind: LinkKind::Patents,
        horizon_year: cfg.horizon_year,
        edges,
        first_events: first,
        stats,
    })
}

/// Links papers to repositories. The event year of a repository is its
/// first star or fork, else its creation.
pub fn link_repos(papers: &[&PaperRecord], repo_links: &[RepoLink], horizon_year: i32) -> LinkageResult {
    let mut stats = LinkageStats::default();
    let by_id: HashMap<&str, &PaperRecord> = papers.iter().map(|p| (p.paper_id.as_str(), *p)).collect();
    let mut edges: BTreeMap<(String, String), LinkEdge> = BTreeMap::new();
    let mut repo_year: HashMap<&str, i32> = HashMap::new();
    for r in repo_links {
        let Some(p) = by_id.get(r.paper_id.as_str()) else {
            stats.unknown_papers += 1;
            continue;
        };
        let y = r.event_year();
        let yr = repo_year.entry(r.repo_url.as_str()).or_insert(y);
        *yr = (*yr).min(y);
        let e = LinkEdge {
            paper_id: r.paper_id.clone(),
            target_id: r.repo_url.clone(),
            title_distance: None,
            author_similarity: None,
            event_time: (y - p.year).max(0) as u32,
        };
        // a repository listed twice for one paper keeps its earliest event
        match edges.get(&(e.paper_id.clone(), e.target_id.clone())) {
            Some(cur) if cur.event_time <= e.event_time => {}
            _ => {
                edges.insert((e.paper_id.clone(), e.target_id.clone()), e);
            }
        }
    }
    let edges: Vec<LinkEdge> = edges.into_values().collect();
    stats.clamped_edges = edges
        .iter()
        .filter(|e| repo_year[e.target_id.as_str()] < by_id[e.paper_id.as_str()].year)
        .count();
    let first = first_events(papers, &edges, &|t| repo_year[t], horizon_year);
    LinkageResult {
        kind: LinkKind::Repositories,
        horizon_year,
        edges,
        first_events: first,
        stats,
    }
}

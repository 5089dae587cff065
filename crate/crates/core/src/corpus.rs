//! Bibliographic records, line-delimited ingestion and the citation graph.
//!
//! Every record file holds one JSON object per line. Records are validated
//! and filtered while streaming; the retained records serialize back to the
//! same canonical line they were read from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{Datelike, NaiveDate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub institutions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    #[serde(rename = "abstract", default, skip_serializing_if = "String::is_empty")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub venue: String,
    pub year: i32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<Author>,
    #[serde(default)]
    pub citation_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outgoing_refs: Vec<String>,
    #[serde(default)]
    pub is_open_access: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arxiv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    /// Publication type tag (e.g. `survey`, `tutorial`) used by the blocklist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pub_type: Option<String>,
}

impl PaperRecord {
    /// Distinct institution ids across all authors, sorted.
    pub fn institutions(&self) -> BTreeSet<&str> {
        self.authors
            .iter()
            .flat_map(|a| a.institutions.iter().map(String::as_str))
            .collect()
    }
}

/// A non-patent-literature reference as extracted from a patent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceString {
    pub raw: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub extracted_title: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extracted_authors: Vec<String>,
}

impl ReferenceString {
    pub fn is_linkable(&self) -> bool {
        !self.extracted_title.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub patent_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub country_code: String,
    pub pub_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inventors: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    #[serde(rename = "abstract", default, skip_serializing_if = "String::is_empty")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub npl_refs: Vec<ReferenceString>,
}

impl PatentRecord {
    pub fn year(&self) -> i32 {
        self.pub_date.year()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoLink {
    pub paper_id: String,
    pub repo_url: String,
    pub created_at: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_star_or_fork_at: Option<NaiveDate>,
}

impl RepoLink {
    /// Year of the first observable use: first star or fork, else creation.
    pub fn event_year(&self) -> i32 {
        self.first_star_or_fork_at.unwrap_or(self.created_at).year()
    }
}

/// Citing-entity family a metric is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Patents,
    Repositories,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Patents => "patents",
            LinkKind::Repositories => "repositories",
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Parse,
    Year,
    MissingField,
    Language,
    Blocklist,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Parse => "parse",
            RejectReason::Year => "year",
            RejectReason::MissingField => "missing-field",
            RejectReason::Language => "language",
            RejectReason::Blocklist => "blocklist",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-file ingestion bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    pub retained: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// `(line number, parser message)` for rows that failed to parse.
    pub malformed: Vec<(usize, String)>,
}

impl LoadReport {
    pub fn rejected_for(&self, reason: RejectReason) -> usize {
        self.rejected.get(&reason).copied().unwrap_or(0)
    }

    fn reject(&mut self, reason: RejectReason) {
        *self.rejected.entry(reason).or_default() += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperField {
    Title,
    Abstract,
    Venue,
    Authors,
    Doi,
    Arxiv,
    Language,
    OutgoingRefs,
}

impl PaperField {
    fn is_present(self, p: &PaperRecord) -> bool {
        let filled = |s: &str| !s.trim().is_empty();
        match self {
            PaperField::Title => filled(&p.title),
            PaperField::Abstract => filled(&p.abstract_text),
            PaperField::Venue => filled(&p.venue),
            PaperField::Authors => !p.authors.is_empty(),
            PaperField::Doi => p.doi.as_deref().is_some_and(filled),
            PaperField::Arxiv => p.arxiv.as_deref().is_some_and(filled),
            PaperField::Language => p.language.as_deref().is_some_and(filled),
            PaperField::OutgoingRefs => !p.outgoing_refs.is_empty(),
        }
    }
}

/// Ingestion filters for paper records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub year_min: i32,
    pub year_max: i32,
    pub required_fields: Vec<PaperField>,
    /// Required language tag; rows whose tag differs (or is absent) are dropped.
    pub language: Option<String>,
    pub blocklist_ids: BTreeSet<String>,
    pub blocklist_venues: BTreeSet<String>,
    pub blocklist_pub_types: BTreeSet<String>,
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            year_min: 1980,
            year_max: 2022,
            required_fields: vec![PaperField::Title, PaperField::Abstract, PaperField::Venue],
            language: None,
            blocklist_ids: BTreeSet::new(),
            blocklist_venues: BTreeSet::new(),
            blocklist_pub_types: BTreeSet::new(),
            strict: false,
        }
    }
}

impl FilterConfig {
    fn screen(&self, p: &PaperRecord) -> Option<RejectReason> {
        if p.year < self.year_min || p.year > self.year_max {
            return Some(RejectReason::Year);
        }
        if self.required_fields.iter().any(|f| !f.is_present(p)) {
            return Some(RejectReason::MissingField);
        }
        if let Some(lang) = &self.language {
            if p.language.as_deref() != Some(lang.as_str()) {
                return Some(RejectReason::Language);
            }
        }
        let blocked_type = p
            .pub_type
            .as_ref()
            .is_some_and(|t| self.blocklist_pub_types.contains(t));
        if self.blocklist_ids.contains(&p.paper_id)
            || self.blocklist_venues.contains(&p.venue)
            || blocked_type
        {
            return Some(RejectReason::Blocklist);
        }
        None
    }
}

/// Streams JSON lines, handing each parsed row to `accept`. Blank lines are
/// ignored. Parse failures are recorded, or abort in strict mode.
fn stream_rows<T, R, F>(reader: R, strict: bool, report: &mut LoadReport, mut accept: F) -> Result<()>
where
    T: DeserializeOwned,
    R: BufRead,
    F: FnMut(T, usize, &mut LoadReport) -> Result<()>,
{
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        match serde_json::from_str::<T>(&line) {
            Ok(row) => accept(row, lineno, report)?,
            Err(e) => {
                if strict {
                    return Err(Error::Malformed {
                        line: lineno,
                        message: e.to_string(),
                    });
                }
                report.reject(RejectReason::Parse);
                report.malformed.push((lineno, e.to_string()));
            }
        }
    }
    Ok(())
}

fn write_jsonl<'a, T: Serialize + 'a, W: Write>(
    items: impl IntoIterator<Item = &'a T>,
    mut out: W,
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Retained papers in input order, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct PaperCorpus {
    papers: Vec<PaperRecord>,
    index: HashMap<String, usize>,
    pub report: LoadReport,
}

impl PaperCorpus {
    pub fn from_records(records: impl IntoIterator<Item = PaperRecord>) -> Result<Self> {
        let mut corpus = PaperCorpus::default();
        for r in records {
            corpus.push(r)?;
        }
        corpus.report.rows = corpus.papers.len();
        corpus.report.retained = corpus.papers.len();
        Ok(corpus)
    }

    fn push(&mut self, record: PaperRecord) -> Result<()> {
        if self.index.contains_key(&record.paper_id) {
            return Err(Error::DuplicateId(record.paper_id));
        }
        self.index.insert(record.paper_id.clone(), self.papers.len());
        self.papers.push(record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PaperRecord> {
        self.index.get(id).map(|&i| &self.papers[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn papers(&self) -> &[PaperRecord] {
        &self.papers
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PaperRecord> {
        self.papers.iter()
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_jsonl(&self.papers, out)
    }
}

/// Reads paper records, applying `cfg`. Duplicate ids are always an error.
pub fn load_papers<R: BufRead>(reader: R, cfg: &FilterConfig) -> Result<PaperCorpus> {
    let mut corpus = PaperCorpus::default();
    let mut report = LoadReport::default();
    stream_rows::<PaperRecord, _, _>(reader, cfg.strict, &mut report, |p, _, report| {
        if let Some(reason) = cfg.screen(&p) {
            report.reject(reason);
            return Ok(());
        }
        corpus.push(p)?;
        report.retained += 1;
        Ok(())
    })?;
    corpus.report = report;
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatentFilter {
    pub year_min: i32,
    pub year_max: i32,
    /// Keep only this country code when set (e.g. `US`).
    pub country_code: Option<String>,
    pub strict: bool,
}

impl Default for PatentFilter {
    fn default() -> Self {
        PatentFilter {
            year_min: 1980,
            year_max: 2022,
            country_code: None,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PatentCorpus {
    patents: Vec<PatentRecord>,
    index: HashMap<String, usize>,
    pub report: LoadReport,
}

impl PatentCorpus {
    pub fn from_records(records: impl IntoIterator<Item = PatentRecord>) -> Result<Self> {
        let mut corpus = PatentCorpus::default();
        for r in records {
            corpus.push(r)?;
        }
        corpus.report.rows = corpus.patents.len();
        corpus.report.retained = corpus.patents.len();
        Ok(corpus)
    }

    fn push(&mut self, record: PatentRecord) -> Result<()> {
        if self.index.contains_key(&record.patent_id) {
            return Err(Error::DuplicateId(record.patent_id));
        }
        self.index.insert(record.patent_id.clone(), self.patents.len());
        self.patents.push(record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PatentRecord> {
        self.index.get(id).map(|&i| &self.patents[i])
    }

    pub fn patents(&self) -> &[PatentRecord] {
        &self.patents
    }

    pub fn len(&self) -> usize {
        self.patents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patents.is_empty()
    }

    /// Number of references with an extracted title, i.e. linkage candidates.
    pub fn linkable_refs(&self) -> usize {
        self.patents
            .iter()
            .flat_map(|p| &p.npl_refs)
            .filter(|r| r.is_linkable())
            .count()
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_jsonl(&self.patents, out)
    }
}

pub fn load_patents<R: BufRead>(reader: R, cfg: &PatentFilter) -> Result<PatentCorpus> {
    let mut corpus = PatentCorpus::default();
    let mut report = LoadReport::default();
    stream_rows::<PatentRecord, _, _>(reader, cfg.strict, &mut report, |p, _, report| {
        let year = p.year();
        if year < cfg.year_min || year > cfg.year_max {
            report.reject(RejectReason::Year);
            return Ok(());
        }
        if let Some(cc) = &cfg.country_code {
            if &p.country_code != cc {
                report.reject(RejectReason::Blocklist);
                return Ok(());
            }
        }
        corpus.push(p)?;
        report.retained += 1;
        Ok(())
    })?;
    corpus.report = report;
    Ok(corpus)
}

/// Reads repository links. Unknown papers are resolved later, at linkage.
pub fn load_repo_links<R: BufRead>(reader: R, strict: bool) -> Result<(Vec<RepoLink>, LoadReport)> {
    let mut links = Vec::new();
    let mut report = LoadReport::default();
    stream_rows::<RepoLink, _, _>(reader, strict, &mut report, |r, _, report| {
        links.push(r);
        report.retained += 1;
        Ok(())
    })?;
    Ok((links, report))
}

pub fn write_repo_links<W: Write>(links: &[RepoLink], out: W) -> std::io::Result<()> {
    write_jsonl(links, out)
}

/// Resolved citation edges between papers of one corpus.
///
/// `references(u)` holds what `u` cites, `citers(v)` holds who cites `v`;
/// every resolved edge appears in both views. References to ids outside
/// the corpus are kept separately as external.
#[derive(Debug, Clone, Default)]
pub struct CitationGraph {
    references: BTreeMap<String, BTreeSet<String>>,
    citers: BTreeMap<String, BTreeSet<String>>,
    external: BTreeMap<String, BTreeSet<String>>,
    pub self_citations: usize,
}

pub fn build_citation_graph(corpus: &PaperCorpus) -> CitationGraph {
    let mut g = CitationGraph::default();
    for p in corpus.iter() {
        for r in &p.outgoing_refs {
            if r == &p.paper_id {
                g.self_citations += 1;
            } else if corpus.contains(r) {
                g.references
                    .entry(p.paper_id.clone())
                    .or_default()
                    .insert(r.clone());
                g.citers
                    .entry(r.clone())
                    .or_default()
                    .insert(p.paper_id.clone());
            } else {
                g.external
                    .entry(p.paper_id.clone())
                    .or_default()
                    .insert(r.clone());
            }
        }
    }
    g
}

impl CitationGraph {
    /// Papers in the corpus cited by `id`.
    pub fn references<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.references
            .get(id)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    /// Papers in the corpus citing `id`.
    pub fn citers<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.citers
            .get(id)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn external_references<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.external
            .get(id)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn edge_count(&self) -> usize {
        self.references.values().map(BTreeSet::len).sum()
    }

    pub fn external_count(&self) -> usize {
        self.external.values().map(BTreeSet::len).sum()
    }

    /// All `(citing, cited)` edges from the outgoing view.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.references
            .iter()
            .flat_map(|(u, vs)| vs.iter().map(move |v| (u.as_str(), v.as_str())))
    }

    /// All `(citing, cited)` edges rebuilt from the incoming view.
    pub fn edges_from_citers(&self) -> BTreeSet<(&str, &str)> {
        self.citers
            .iter()
            .flat_map(|(v, us)| us.iter().map(move |u| (u.as_str(), v.as_str())))
            .collect()
    }
}

/// Studied set `H` and its complement `H'` over a corpus `U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPartition {
    pub studied: BTreeSet<String>,
    pub complement: BTreeSet<String>,
    pub kind: LinkKind,
    /// Studied-paper count per selected venue.
    pub per_venue: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl CorpusPartition {
    /// Builds a partition from an explicit universe and studied subset.
    /// Studied ids outside the universe are an error.
    pub fn from_members<'a>(
        universe: impl IntoIterator<Item = &'a str>,
        studied: &BTreeSet<String>,
        kind: LinkKind,
    ) -> Result<Self> {
        let universe: BTreeSet<String> = universe.into_iter().map(str::to_owned).collect();
        if let Some(stray) = studied.iter().find(|id| !universe.contains(*id)) {
            return Err(Error::invalid(format!("studied id `{stray}` not in universe")));
        }
        let complement = universe.difference(studied).cloned().collect();
        Ok(CorpusPartition {
            studied: studied.clone(),
            complement,
            kind,
            per_venue: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn contains_studied(&self, id: &str) -> bool {
        self.studied.contains(id)
    }
}

/// Splits the corpus into papers published in `venue_set` and the rest.
pub fn partition(corpus: &PaperCorpus, venue_set: &BTreeSet<String>, kind: LinkKind) -> Result<CorpusPartition> {
    if venue_set.is_empty() {
        return Err(Error::invalid("venue set is empty"));
    }
    let mut studied = BTreeSet::new();
    let mut complement = BTreeSet::new();
    let mut per_venue: BTreeMap<String, usize> = venue_set.iter().map(|v| (v.clone(), 0)).collect();
    for p in corpus.iter() {
        if let Some(n) = per_venue.get_mut(&p.venue) {
            *n += 1;
            studied.insert(p.paper_id.clone());
        } else {
            complement.insert(p.paper_id.clone());
        }
    }
    let mut warnings = Vec::new();
    if studied.is_empty() {
        warnings.push("no paper in the selected venues; studied set is empty".to_owned());
    }
    Ok(CorpusPartition {
        studied,
        complement,
        kind,
        per_venue,
        warnings,
    })
}

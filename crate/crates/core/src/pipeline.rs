//! Stage orchestration and report emission.
//!
//! Every stage reads its inputs from the output directory (or the configured
//! input files), writes its artifacts there, and leaves a `STALE` marker in
//! place until the `report` stage has written a fresh manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    assign_all, build_keyword_queries, dedupe, default_table, parse_keyword_table, quality_filter,
    select_rai, RaiCorpus, Topic,
};
use crate::conventionality::{analyze, ConventionalityConfig};
use crate::corpus::{
    build_citation_graph, load_papers, load_patents, load_repo_links, partition, write_repo_links,
    CorpusPartition, FilterConfig, LinkKind, LoadReport, PaperCorpus, PaperRecord, PatentCorpus,
    PatentFilter, RepoLink,
};
use crate::embedding::{keys, load_vectors, MockEmbedder, VectorStore};
use crate::error::{Error, Result};
use crate::linkage::{link_patents, link_repos, LinkageConfig, LinkageResult};
use crate::metrics::{
    citation_weighted_ratio, impact_ratio, kaplan_meier, median_crossing, rank_institutions,
    two_proportion_z_test, welch_t_test, RankBy, Share, TestResult,
};

pub const STALE_MARKER: &str = "STALE";
pub const MANIFEST: &str = "manifest.json";

/// The files the report stage requires.
pub const REPORT_FILES: [&str; 5] = [
    "rq1_impact.csv",
    "survival.csv",
    "yearly_counts.csv",
    "institutions.csv",
    "conventionality.csv",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub papers: PathBuf,
    pub patents: PathBuf,
    pub repos: PathBuf,
    /// Two-column keyword table; the bundled default table when absent.
    #[serde(default)]
    pub keywords: Option<PathBuf>,
    /// Precomputed vectors; the mock embedder is used when absent.
    #[serde(default)]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    #[default]
    Abstract,
    TitleAbstract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub percentile: f64,
    pub reference_year: i32,
    pub text: TextMode,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            percentile: 99.0,
            reference_year: 2023,
            text: TextMode::Abstract,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub mock_dim: usize,
    pub mock_seed: u64,
    /// Abort on vector rows that fail the load checks.
    pub strict: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            mock_dim: 256,
            mock_seed: 0,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub top_n: usize,
    pub rank_by: RankBy,
    /// Use the pooled-variance t test instead of Welch.
    pub pooled_t: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            top_n: 50,
            rank_by: RankBy::AverageShare,
            pooled_t: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    /// Venues forming the studied set `H` for the venue comparison.
    #[serde(default)]
    pub studied_venues: BTreeSet<String>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub patent_filter: PatentFilter,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub linkage: LinkageConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub conventionality: ConventionalityConfig,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        fix(&mut cfg.out_dir);
        fix(&mut cfg.inputs.papers);
        fix(&mut cfg.inputs.patents);
        fix(&mut cfg.inputs.repos);
        if let Some(p) = cfg.inputs.keywords.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.inputs.vectors.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let mut paths = vec![&self.inputs.papers, &self.inputs.patents, &self.inputs.repos];
        paths.extend(self.inputs.keywords.iter());
        paths.extend(self.inputs.vectors.iter());
        for p in paths {
            if !p.is_file() {
                return Err(Error::Config(format!("input `{}` does not exist", p.display())));
            }
        }
        let c = &self.classify;
        if !(c.percentile > 0.0 && c.percentile <= 100.0) {
            return Err(Error::Config(format!("classify.percentile {} not in (0, 100]", c.percentile)));
        }
        if self.conventionality.iterations < 2 {
            return Err(Error::Config("conventionality.iterations must be at least 2".into()));
        }
        if self.embedding.mock_dim == 0 {
            return Err(Error::Config("embedding.mock_dim must be positive".into()));
        }
        if self.metrics.top_n == 0 {
            return Err(Error::Config("metrics.top_n must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the analysis settings. Output location and thread count are
    /// excluded, and inputs enter the manifest by content hash instead of
    /// by path.
    pub fn settings_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.threads = 0;
        c.inputs.papers = PathBuf::new();
        c.inputs.patents = PathBuf::new();
        c.inputs.repos = PathBuf::new();
        c.inputs.keywords = c.inputs.keywords.map(|_| PathBuf::from("set"));
        c.inputs.vectors = c.inputs.vectors.map(|_| PathBuf::from("set"));
        let canon = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(canon.as_bytes()))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Classify,
    Link,
    Metrics,
    Conventionality,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Classify,
        Stage::Link,
        Stage::Metrics,
        Stage::Conventionality,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Link => "link",
            Stage::Metrics => "metrics",
            Stage::Conventionality => "conventionality",
            Stage::Report => "report",
        }
    }
}

/// A stage failed; the output directory has been marked stale.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

struct Table {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl Table {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(header).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Table { path, w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w
            .write_record(fields)
            .map_err(|e| Error::invalid(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn pct(s: Share) -> String {
    if s.whole == 0 {
        String::new()
    } else {
        format!("{:.1}", s.percent())
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub papers: LoadReport,
    pub patents: LoadReport,
    pub repos: LoadReport,
    pub linkable_refs: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub model_id: String,
    pub assigned: usize,
    pub threshold: f64,
    pub above_threshold: usize,
    pub after_quality_filter: usize,
    pub after_dedupe: usize,
}

/// Loaded ingest artifacts.
pub struct Ingested {
    pub papers: PaperCorpus,
    pub patents: PatentCorpus,
    pub repos: Vec<RepoLink>,
}

fn read_ingested(cfg: &PipelineConfig) -> Result<Ingested> {
    let papers = load_papers(
        open(&cfg.out("papers.jsonl"))?,
        &FilterConfig {
            strict: true,
            ..FilterConfig::default()
        },
    )?;
    let patents = load_patents(
        open(&cfg.out("patents.jsonl"))?,
        &PatentFilter {
            strict: true,
            year_min: i32::MIN,
            year_max: i32::MAX,
            country_code: None,
        },
    )?;
    let (repos, _) = load_repo_links(open(&cfg.out("repos.jsonl"))?, true)?;
    Ok(Ingested { papers, patents, repos })
}

fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let papers = load_papers(open(&cfg.inputs.papers)?, &cfg.filter)?;
    let patents = load_patents(open(&cfg.inputs.patents)?, &cfg.patent_filter)?;
    let (repos, repo_report) = load_repo_links(open(&cfg.inputs.repos)?, cfg.filter.strict)?;
    let path = cfg.out("papers.jsonl");
    let mut w = create(&path)?;
    papers.write_jsonl(&mut w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = cfg.out("patents.jsonl");
    let mut w = create(&path)?;
    patents.write_jsonl(&mut w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = cfg.out("repos.jsonl");
    let mut w = create(&path)?;
    write_repo_links(&repos, &mut w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(
        &cfg.out("ingest_report.json"),
        &IngestReport {
            papers: papers.report.clone(),
            patents: patents.report.clone(),
            repos: repo_report,
            linkable_refs: patents.linkable_refs(),
        },
    )
}

fn document_text(p: &PaperRecord, mode: TextMode) -> String {
    match mode {
        TextMode::Abstract => p.abstract_text.clone(),
        TextMode::TitleAbstract => format!("{}. {}", p.title, p.abstract_text),
    }
}

/// Loads the configured vector file, or mock-embeds `items` when none is set.
fn vectors_for(cfg: &PipelineConfig, items: Vec<(String, String)>) -> Result<VectorStore> {
    match &cfg.inputs.vectors {
        Some(path) => {
            let (store, _) = load_vectors(path, cfg.embedding.strict)?;
            if let Some((k, _)) = items.iter().find(|(k, _)| !store.contains(k)) {
                return Err(Error::MissingVector(k.clone()));
            }
            Ok(store)
        }
        None => MockEmbedder::new(cfg.embedding.mock_dim, cfg.embedding.mock_seed)
            .embed_all(items.iter().map(|(k, t)| (k.clone(), t.as_str()))),
    }
}

fn classify(cfg: &PipelineConfig) -> Result<()> {
    let ing = read_ingested(cfg)?;
    let table = match &cfg.inputs.keywords {
        Some(p) => parse_keyword_table(open(p)?)?,
        None => default_table(),
    };
    let queries = build_keyword_queries(&table)?;
    let mut items: Vec<(String, String)> = ing
        .papers
        .iter()
        .map(|p| (keys::document(&p.paper_id), document_text(p, cfg.classify.text)))
        .collect();
    for q in &queries {
        for v in &q.variants {
            items.push((keys::keyword(v), v.clone()));
        }
    }
    let store = vectors_for(cfg, items)?;
    let ids: Vec<&str> = ing.papers.iter().map(|p| p.paper_id.as_str()).collect();
    let assignments = assign_all(&ids, &store, &queries)?;

    let mut t = Table::create(cfg.out("assignments.csv"), &["paper_id", "topic", "keyword", "score"])?;
    for a in &assignments {
        t.row([
            a.paper_id.clone(),
            a.topic.to_string(),
            a.best_keyword.clone(),
            a.score.value().to_string(),
        ])?;
    }
    t.finish()?;

    let mut rai = select_rai(&assignments, cfg.classify.percentile)?;
    let above = rai.len();
    let selected: Vec<&PaperRecord> = rai
        .assignments
        .iter()
        .map(|a| ing.papers.get(&a.paper_id).expect("assigned paper exists"))
        .collect();
    let good = quality_filter(selected, cfg.classify.reference_year);
    let after_quality = good.len();
    let kept: HashSet<&str> = dedupe(good).into_iter().map(|p| p.paper_id.as_str()).collect();
    rai.retain_ids(&kept);

    write_json(&cfg.out("rai.json"), &rai)?;
    let mut t = Table::create(
        cfg.out("rai.csv"),
        &["paper_id", "topic", "keyword", "score", "year", "venue", "citation_count"],
    )?;
    for a in &rai.assignments {
        let p = ing.papers.get(&a.paper_id).expect("assigned paper exists");
        t.row([
            a.paper_id.clone(),
            a.topic.to_string(),
            a.best_keyword.clone(),
            a.score.value().to_string(),
            p.year.to_string(),
            p.venue.clone(),
            p.citation_count.to_string(),
        ])?;
    }
    t.finish()?;
    write_json(
        &cfg.out("classify_report.json"),
        &ClassifyReport {
            model_id: store.model_id().to_owned(),
            assigned: assignments.len(),
            threshold: rai.threshold,
            above_threshold: above,
            after_quality_filter: after_quality,
            after_dedupe: rai.len(),
        },
    )
}

fn write_edges(path: PathBuf, res: &LinkageResult) -> Result<()> {
    let mut t = Table::create(
        path,
        &["paper_id", "target_id", "kind", "title_distance", "author_similarity", "event_time"],
    )?;
    for e in &res.edges {
        t.row([
            e.paper_id.clone(),
            e.target_id.clone(),
            res.kind.to_string(),
            opt(e.title_distance),
            opt(e.author_similarity),
            e.event_time.to_string(),
        ])?;
    }
    t.finish()
}

fn link(cfg: &PipelineConfig) -> Result<()> {
    let ing = read_ingested(cfg)?;
    let mut items: Vec<(String, String)> = ing
        .papers
        .iter()
        .map(|p| (keys::title(&p.paper_id), p.title.clone()))
        .collect();
    for pt in ing.patents.patents() {
        for (i, r) in pt.npl_refs.iter().enumerate() {
            if r.is_linkable() {
                items.push((keys::reference(&pt.patent_id, i), r.extracted_title.clone()));
            }
        }
    }
    let store = vectors_for(cfg, items)?;
    let papers: Vec<&PaperRecord> = ing.papers.iter().collect();
    let patents = link_patents(&papers, &ing.patents, &store, &cfg.linkage)?;
    let repos = link_repos(&papers, &ing.repos, cfg.linkage.horizon_year);
    write_edges(cfg.out("links_patents.csv"), &patents)?;
    write_edges(cfg.out("links_repos.csv"), &repos)?;
    write_json(&cfg.out("linkage_patents.json"), &patents)?;
    write_json(&cfg.out("linkage_repos.json"), &repos)
}

/// Per-(topic, year) paper counts; years without papers are omitted.
pub fn emit_yearly_counts(rai: &RaiCorpus, corpus: &PaperCorpus) -> Result<BTreeMap<(Topic, i32), usize>> {
    let mut out = BTreeMap::new();
    for a in &rai.assignments {
        let p = corpus
            .get(&a.paper_id)
            .ok_or_else(|| Error::invalid(format!("paper `{}` not in corpus", a.paper_id)))?;
        *out.entry((a.topic, p.year)).or_default() += 1;
    }
    Ok(out)
}

/// Ids of the RAI papers of each topic, in topic order.
fn topic_members(rai: &RaiCorpus) -> BTreeMap<Topic, BTreeSet<String>> {
    let mut m: BTreeMap<Topic, BTreeSet<String>> = Topic::ALL.iter().map(|t| (*t, BTreeSet::new())).collect();
    for a in &rai.assignments {
        m.get_mut(&a.topic).expect("every topic present").insert(a.paper_id.clone());
    }
    m
}

fn test_row(t: &mut Table, topic: &str, kind: LinkKind, test: &str, res: Result<TestResult>, n1: u64, n2: u64) -> Result<()> {
    let (stat, p, df, note) = match res {
        Ok(r) => (r.statistic.to_string(), r.p_value.to_string(), opt(r.df), String::new()),
        Err(e) => (String::new(), String::new(), String::new(), e.to_string()),
    };
    t.row([
        topic.to_owned(),
        kind.to_string(),
        test.to_owned(),
        stat,
        p,
        df,
        n1.to_string(),
        n2.to_string(),
        note,
    ])
}

fn metrics(cfg: &PipelineConfig) -> Result<()> {
    let ing = read_ingested(cfg)?;
    let rai: RaiCorpus = read_json(&cfg.out("rai.json"))?;
    let pat: LinkageResult = read_json(&cfg.out("linkage_patents.json"))?;
    let rep: LinkageResult = read_json(&cfg.out("linkage_repos.json"))?;
    let members = topic_members(&rai);
    let universe: Vec<&str> = ing.papers.iter().map(|p| p.paper_id.as_str()).collect();
    let linkages = [&pat, &rep];

    // per-topic impact counts
    let mut t = Table::create(
        cfg.out("rq1_impact.csv"),
        &[
            "topic",
            "papers_into_patents",
            "papers_into_patents_pct",
            "papers_into_repos",
            "papers_into_repos_pct",
            "papers",
            "citations_into_patents",
            "citations_into_patents_pct",
            "citations_into_repos",
            "citations_into_repos_pct",
            "citations",
        ],
    )?;
    let mut tests = Table::create(
        cfg.out("rq1_tests.csv"),
        &["topic", "kind", "test", "statistic", "p_value", "df", "n1", "n2", "note"],
    )?;
    for (topic, ids) in &members {
        let mut counts = Vec::new();
        let mut cites = Vec::new();
        let mut total_cites = 0u64;
        for res in linkages {
            let part = CorpusPartition::from_members(universe.iter().copied(), ids, res.kind)?;
            let (studied, complement) = if ids.is_empty() {
                (Share { part: 0, whole: 0 }, None)
            } else {
                let r = impact_ratio(&part, res)?;
                (r.studied, r.complement)
            };
            let cw = match citation_weighted_ratio(&part, res, &ing.papers) {
                Ok(s) => s,
                Err(Error::Degenerate(_)) => Share { part: 0, whole: 0 },
                Err(e) => return Err(e),
            };
            total_cites = cw.whole;
            counts.push(studied);
            cites.push(cw);

            let name = topic.as_str();
            let z = match complement {
                Some(c) if studied.whole > 0 => two_proportion_z_test(studied.part, studied.whole, c.part, c.whole),
                _ => Err(Error::degenerate("empty group")),
            };
            test_row(
                &mut tests,
                name,
                res.kind,
                "two_proportion_z",
                z,
                studied.whole,
                complement.map_or(0, |c| c.whole),
            )?;
            let linked = res.linked_papers();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for id in ids {
                let c = ing.papers.get(id).expect("rai paper in corpus").citation_count as f64;
                if linked.contains(id.as_str()) {
                    a.push(c);
                } else {
                    b.push(c);
                }
            }
            let (label, res_t) = if cfg.metrics.pooled_t {
                ("student_t_citations", crate::metrics::student_t_test(&a, &b))
            } else {
                ("welch_t_citations", welch_t_test(&a, &b))
            };
            test_row(&mut tests, name, res.kind, label, res_t, a.len() as u64, b.len() as u64)?;
        }
        t.row([
            topic.to_string(),
            counts[0].part.to_string(),
            pct(counts[0]),
            counts[1].part.to_string(),
            pct(counts[1]),
            ids.len().to_string(),
            cites[0].part.to_string(),
            pct(cites[0]),
            cites[1].part.to_string(),
            pct(cites[1]),
            total_cites.to_string(),
        ])?;
    }
    t.finish()?;
    tests.finish()?;

    // Survival per topic and link kind
    let mut t = Table::create(
        cfg.out("survival.csv"),
        &["topic", "kind", "time", "at_risk", "events", "censored", "survival"],
    )?;
    let mut med = Table::create(cfg.out("survival_medians.csv"), &["topic", "kind", "papers", "median_time"])?;
    for (topic, ids) in &members {
        for res in linkages {
            let rows = res.survival_rows(ids.iter().map(String::as_str));
            if rows.is_empty() {
                continue;
            }
            let curve = kaplan_meier(&rows)?;
            for s in &curve.steps {
                t.row([
                    topic.to_string(),
                    res.kind.to_string(),
                    s.time.to_string(),
                    s.at_risk.to_string(),
                    s.events.to_string(),
                    s.censored.to_string(),
                    s.survival.to_string(),
                ])?;
            }
            med.row([
                topic.to_string(),
                res.kind.to_string(),
                rows.len().to_string(),
                opt(median_crossing(&curve)),
            ])?;
        }
    }
    t.finish()?;
    med.finish()?;

    let mut t = Table::create(cfg.out("yearly_counts.csv"), &["topic", "year", "papers"])?;
    for ((topic, year), n) in emit_yearly_counts(&rai, &ing.papers)? {
        t.row([topic.to_string(), year.to_string(), n.to_string()])?;
    }
    t.finish()?;

    // institution ranking
    let ranking = rank_institutions(&rai, &ing.papers, &pat, &rep, cfg.metrics.top_n, cfg.metrics.rank_by)?;
    let mut t = Table::create(
        cfg.out("institutions.csv"),
        &[
            "rank",
            "institution",
            "papers_into_patents",
            "papers_into_repos",
            "total",
            "topic_diversity",
            "total_rai_papers",
        ],
    )?;
    for (i, r) in ranking.rows.iter().enumerate() {
        t.row([
            (i + 1).to_string(),
            r.institution.clone(),
            r.papers_into_patents.to_string(),
            r.papers_into_repos.to_string(),
            r.total_linked.to_string(),
            format!("{:.4}", r.topic_diversity),
            r.total_rai_papers.to_string(),
        ])?;
    }
    t.finish()?;

    if !cfg.studied_venues.is_empty() {
        let mut t = Table::create(
            cfg.out("venue_impact.csv"),
            &[
                "kind",
                "studied_linked",
                "studied",
                "studied_pct",
                "complement_linked",
                "complement",
                "complement_pct",
                "z",
                "p_value",
            ],
        )?;
        for res in linkages {
            let part = partition(&ing.papers, &cfg.studied_venues, res.kind)?;
            if part.studied.is_empty() {
                continue;
            }
            let r = impact_ratio(&part, res)?;
            let c = r.complement.unwrap_or(Share { part: 0, whole: 0 });
            let z = two_proportion_z_test(r.studied.part, r.studied.whole, c.part, c.whole).ok();
            t.row([
                res.kind.to_string(),
                r.studied.part.to_string(),
                r.studied.whole.to_string(),
                pct(r.studied),
                c.part.to_string(),
                c.whole.to_string(),
                pct(c),
                opt(z.map(|z| z.statistic)),
                opt(z.map(|z| z.p_value)),
            ])?;
        }
        t.finish()?;
    }
    Ok(())
}

fn conventionality(cfg: &PipelineConfig) -> Result<()> {
    let ing = read_ingested(cfg)?;
    let rai: RaiCorpus = read_json(&cfg.out("rai.json"))?;
    let pat: LinkageResult = read_json(&cfg.out("linkage_patents.json"))?;
    let rep: LinkageResult = read_json(&cfg.out("linkage_repos.json"))?;
    let graph = build_citation_graph(&ing.papers);
    let ids: Vec<&str> = rai.assignments.iter().map(|a| a.paper_id.as_str()).collect();
    let (model, rows) = analyze(ing.papers.papers(), &graph, &ids, &cfg.conventionality, cfg.seed)?;

    let mut t = Table::create(
        cfg.out("null_pairs.csv"),
        &["venue_i", "venue_j", "observed", "null_mean", "null_stddev"],
    )?;
    for ((a, b), (obs, null)) in &model.pairs {
        t.row([
            a.clone(),
            b.clone(),
            obs.to_string(),
            null.mean.to_string(),
            null.stddev.to_string(),
        ])?;
    }
    t.finish()?;

    let topic_of: HashMap<&str, Topic> = rai.topic_of();
    let in_pat = pat.linked_papers();
    let in_rep = rep.linked_papers();
    let mut t = Table::create(
        cfg.out("conventionality.csv"),
        &[
            "paper_id",
            "topic",
            "into_patents",
            "into_repos",
            "tenth_percentile_z",
            "pairs",
            "excluded_pairs",
        ],
    )?;
    // (topic, kind, linked) -> scores
    let mut groups: BTreeMap<(Topic, LinkKind, bool), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        let id = r.paper_id.as_str();
        let (p, q) = (in_pat.contains(id), in_rep.contains(id));
        t.row([
            r.paper_id.clone(),
            topic_of[id].to_string(),
            p.to_string(),
            q.to_string(),
            opt(r.score.as_ref().map(|s| s.tenth_percentile_z)),
            r.n_pairs.to_string(),
            r.n_excluded.to_string(),
        ])?;
        if let Some(s) = &r.score {
            groups.entry((topic_of[id], LinkKind::Patents, p)).or_default().push(s.tenth_percentile_z);
            groups.entry((topic_of[id], LinkKind::Repositories, q)).or_default().push(s.tenth_percentile_z);
        }
    }
    t.finish()?;

    let mut t = Table::create(
        cfg.out("conventionality_summary.csv"),
        &["topic", "kind", "linked", "papers", "mean_z", "median_z", "conventional_share"],
    )?;
    for ((topic, kind, linked), mut zs) in groups {
        zs.sort_by(f64::total_cmp);
        let n = zs.len();
        let mean = zs.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            zs[n / 2]
        } else {
            (zs[n / 2 - 1] + zs[n / 2]) / 2.0
        };
        let conventional = zs.iter().filter(|&&z| z > 0.0).count();
        t.row([
            topic.to_string(),
            kind.to_string(),
            linked.to_string(),
            n.to_string(),
            mean.to_string(),
            median.to_string(),
            (conventional as f64 / n as f64).to_string(),
        ])?;
    }
    t.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub settings_sha256: String,
    pub model_id: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn report(cfg: &PipelineConfig) -> Result<Manifest> {
    if let Ok(marker) = fs::read_to_string(cfg.out(STALE_MARKER)) {
        if marker.contains(" failed: ") {
            return Err(Error::invalid(format!("refusing to report over a failed stage: {}", marker.trim())));
        }
    }
    for f in REPORT_FILES {
        if !cfg.out(f).is_file() {
            return Err(Error::invalid(format!("report file `{f}` is missing")));
        }
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("papers".to_owned(), sha256_file(&cfg.inputs.papers)?);
    inputs.insert("patents".to_owned(), sha256_file(&cfg.inputs.patents)?);
    inputs.insert("repos".to_owned(), sha256_file(&cfg.inputs.repos)?);
    if let Some(p) = &cfg.inputs.keywords {
        inputs.insert("keywords".to_owned(), sha256_file(p)?);
    }
    if let Some(p) = &cfg.inputs.vectors {
        inputs.insert("vectors".to_owned(), sha256_file(p)?);
    }
    let mut outputs = BTreeMap::new();
    let mut names: Vec<String> = fs::read_dir(&cfg.out_dir)
        .map_err(|e| Error::io(&cfg.out_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST && n != STALE_MARKER)
        .collect();
    names.sort();
    for n in names {
        let h = sha256_file(&cfg.out(&n))?;
        outputs.insert(n, h);
    }
    let classify: ClassifyReport = read_json(&cfg.out("classify_report.json"))?;
    let manifest = Manifest {
        seed: cfg.seed,
        settings_sha256: cfg.settings_hash(),
        model_id: classify.model_id,
        inputs,
        outputs,
    };
    write_json(&cfg.out(MANIFEST), &manifest)?;
    let stale = cfg.out(STALE_MARKER);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    Ok(manifest)
}

fn mark_stale(cfg: &PipelineConfig, text: &str) {
    // best effort: the stage error is what gets reported
    let _ = fs::write(cfg.out(STALE_MARKER), text);
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs one stage. Any stage but `report` leaves the directory marked stale
/// until the next report; a failing stage records its error in the marker.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> std::result::Result<(), StageError> {
    let fail = |source: Error| {
        mark_stale(cfg, &format!("stage {} failed: {source}\n", stage.as_str()));
        StageError {
            stage: stage.as_str(),
            source,
        }
    };
    fs::create_dir_all(&cfg.out_dir).map_err(|e| fail(Error::io(&cfg.out_dir, e)))?;
    if stage != Stage::Report {
        mark_stale(cfg, &format!("stage {} started; run report to refresh the manifest\n", stage.as_str()));
    }
    let res = with_pool(cfg.threads, || match stage {
        Stage::Ingest => ingest(cfg),
        Stage::Classify => classify(cfg),
        Stage::Link => link(cfg),
        Stage::Metrics => metrics(cfg),
        Stage::Conventionality => conventionality(cfg),
        Stage::Report => report(cfg).map(|_| ()),
    })
    .and_then(|r| r);
    res.map_err(fail)
}

/// Runs every stage in order and returns the manifest.
pub fn run(cfg: &PipelineConfig) -> std::result::Result<Manifest, StageError> {
    for stage in Stage::ALL {
        run_stage(cfg, stage)?;
    }
    read_json(&cfg.out(MANIFEST)).map_err(|source| StageError {
        stage: Stage::Report.as_str(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::TopicAssignment;
    use crate::embedding::SimilarityScore;

    fn paper(id: &str, year: i32) -> PaperRecord {
        PaperRecord {
            paper_id: id.into(),
            title: format!("t {id}"),
            abstract_text: "a".into(),
            venue: "V".into(),
            year,
            authors: vec![],
            citation_count: 0,
            outgoing_refs: vec![],
            is_open_access: false,
            doi: None,
            arxiv: None,
            language: None,
            pub_type: None,
        }
    }

    fn assignment(id: &str, topic: Topic) -> TopicAssignment {
        TopicAssignment {
            paper_id: id.into(),
            topic,
            best_keyword: "k".into(),
            score: SimilarityScore::new(0.5),
        }
    }

    #[test]
    fn yearly_counts_one_per_topic_per_year() {
        let mut papers = Vec::new();
        let mut assignments = Vec::new();
        for (i, t) in Topic::ALL.iter().enumerate() {
            for y in [2019, 2020] {
                let id = format!("{i}-{y}");
                papers.push(paper(&id, y));
                assignments.push(assignment(&id, *t));
            }
        }
        let corpus = PaperCorpus::from_records(papers).unwrap();
        let rai = RaiCorpus {
            threshold: 0.0,
            percentile: 99.0,
            assignments,
        };
        let counts = emit_yearly_counts(&rai, &corpus).unwrap();
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&n| n == 1));
        assert_eq!(counts.values().sum::<usize>(), rai.len());
    }

    #[test]
    fn yearly_counts_omit_empty_years() {
        let corpus = PaperCorpus::from_records(vec![paper("a", 2015), paper("b", 2018)]).unwrap();
        let rai = RaiCorpus {
            threshold: 0.0,
            percentile: 99.0,
            assignments: vec![assignment("a", Topic::Privacy), assignment("b", Topic::Privacy)],
        };
        let counts = emit_yearly_counts(&rai, &corpus).unwrap();
        let years: Vec<i32> = counts.keys().map(|k| k.1).collect();
        assert_eq!(years, vec![2015, 2018]);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let text = r#"
out_dir = "out"
[inputs]
papers = "p.jsonl"
patents = "q.jsonl"
repos = "r.jsonl"
"#;
        let err = PipelineConfig::from_toml(text, Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("seed")), "{err}");
    }

    #[test]
    fn missing_input_fails_validation() {
        let text = r#"
seed = 1
out_dir = "out"
[inputs]
papers = "/nonexistent/p.jsonl"
patents = "/nonexistent/q.jsonl"
repos = "/nonexistent/r.jsonl"
"#;
        let cfg = PipelineConfig::from_toml(text, Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn settings_hash_ignores_location_and_threads() {
        let text = |out: &str, threads: usize| {
            format!(
                "seed = 3\nthreads = {threads}\nout_dir = \"{out}\"\n[inputs]\npapers = \"p\"\npatents = \"q\"\nrepos = \"r\"\n"
            )
        };
        let a = PipelineConfig::from_toml(&text("a", 1), Path::new("/x")).unwrap();
        let b = PipelineConfig::from_toml(&text("b", 4), Path::new("/y")).unwrap();
        assert_eq!(a.settings_hash(), b.settings_hash());
        let mut c = a.clone();
        c.seed = 4;
        assert_ne!(a.settings_hash(), c.settings_hash());
    }
}

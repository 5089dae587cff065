//! Seeded synthetic corpora with planted ground truth.
//!
//! Used by the test suites, the benchmarks and the bundled fixture: papers
//! with random titles and abstracts (a share of them written around one
//! Responsible-AI keyword), patents whose NPL references are lightly
//! perturbed copies of planted paper titles, and repository links.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{Topic, DEFAULT_KEYWORDS, PREFIXES};
use crate::corpus::{Author, LinkKind, PaperRecord, PatentRecord, ReferenceString, RepoLink};
use crate::error::{Error, Result};

const WORDS: &[&str] = &[
    "adaptive", "agent", "alignment", "analysis", "approach", "architecture", "attention", "augmentation",
    "autoencoder", "bandit", "batch", "bayesian", "benchmark", "boosting", "calibration", "causal", "channel",
    "classification", "clustering", "compression", "contrastive", "convolutional", "corpus", "curriculum",
    "decoding", "deep", "dense", "detection", "diffusion", "dimension", "discovery", "distillation",
    "distributed", "domain", "dropout", "dynamic", "efficient", "embedding", "encoder", "ensemble",
    "estimation", "evaluation", "exploration", "extraction", "feature", "federated", "few", "filtering",
    "forecasting", "framework", "generative", "gradient", "graph", "hierarchical", "hybrid", "image",
    "improved", "inference", "interactive", "kernel", "knowledge", "language", "large", "latent", "layer",
    "learning", "linear", "local", "low", "manifold", "markov", "matrix", "memory", "method", "metric",
    "mixture", "modal", "model", "modeling", "monte", "multi", "network", "neural", "noise", "online",
    "optimal", "optimization", "parallel", "parsing", "policy", "pretraining", "prediction", "probabilistic",
    "pruning", "query", "random", "ranking", "reasoning", "recognition", "recurrent", "regression",
    "reinforcement", "representation", "retrieval", "reward", "sampling", "scalable", "search", "segmentation",
    "semantic", "sequence", "shot", "sparse", "spectral", "speech", "stochastic", "structured", "supervised",
    "synthesis", "temporal", "tensor", "text", "tracking", "training", "transfer", "transformer", "tree",
    "uncertainty", "unsupervised", "user", "variational", "video", "vision", "visual", "weighted",
];

const FIRST: &[&str] = &[
    "Ana", "Bo", "Carla", "Dmitri", "Elena", "Farid", "Grace", "Hiro", "Ines", "Jamal", "Kira", "Luis",
    "Mei", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tariq", "Uma", "Viktor", "Wen", "Ximena",
    "Yusuf", "Zoe", "Amir", "Bianca", "Chen", "Dara",
];

const LAST: &[&str] = &[
    "Abara", "Becker", "Castillo", "Dubois", "Eriksen", "Fujita", "Garcia", "Haddad", "Ivanova", "Jensen",
    "Kowalski", "Larsen", "Moreau", "Nakamura", "Okafor", "Petrov", "Quintero", "Rossi", "Schmidt",
    "Tanaka", "Uddin", "Vargas", "Weber", "Xu", "Yamamoto", "Zhang", "Almeida", "Brennan", "Costa",
    "Delgado", "Engel", "Fischer", "Gupta", "Horvath", "Iqbal", "Joshi", "Kim", "Lindqvist", "Mendes", "Novak",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub papers: usize,
    pub patents: usize,
    pub seed: u64,
    pub first_year: i32,
    pub last_year: i32,
    pub venues: usize,
    pub institutions: usize,
    /// Share of papers written around an RAI keyword.
    pub rai_share: f64,
    /// Share of papers cited by at least one patent.
    pub patent_cited_share: f64,
    /// Share of papers with at least one repository.
    pub repo_share: f64,
    /// Maximum character edits applied to planted reference titles.
    pub max_title_edits: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            papers: 500,
            patents: 200,
            seed: 7,
            first_year: 2015,
            last_year: 2022,
            venues: 12,
            institutions: 30,
            rai_share: 0.25,
            patent_cited_share: 0.3,
            repo_share: 0.4,
            max_title_edits: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub papers: Vec<PaperRecord>,
    pub patents: Vec<PatentRecord>,
    pub repos: Vec<RepoLink>,
    /// Planted `(paper_id, patent_id)` citations.
    pub patent_links: BTreeSet<(String, String)>,
    /// Planted `(paper_id, repo_url)` links.
    pub repo_links: BTreeSet<(String, String)>,
    /// Keyword topic written into RAI-flavoured abstracts.
    pub planted_topics: BTreeMap<String, Topic>,
}

fn title(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(8..=14);
    let mut words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let mut s = words[0].to_owned();
    s[..1].make_ascii_uppercase();
    words[0] = &s;
    words.join(" ")
}

fn sentence(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Applies exactly `edits` random single-character edits to lowercase
/// letters of `s` (substitution, insertion or deletion).
pub fn perturb(s: &str, edits: usize, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    for _ in 0..edits {
        let letter = (b'a' + rng.gen_range(0..26u8)) as char;
        let pos = rng.gen_range(0..chars.len());
        match rng.gen_range(0..3) {
            0 => chars[pos] = letter,
            1 => chars.insert(pos, letter),
            _ if chars.len() > 1 => {
                chars.remove(pos);
            }
            _ => chars[pos] = letter,
        }
    }
    chars.into_iter().collect()
}

fn date(rng: &mut ChaCha8Rng, year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap()
}

fn author(rng: &mut ChaCha8Rng, institutions: usize) -> Author {
    let name = format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap());
    let k = rng.gen_range(0..=2usize).min(institutions);
    let mut inst: Vec<String> = (0..k).map(|_| format!("inst-{:02}", rng.gen_range(0..institutions))).collect();
    inst.sort();
    inst.dedup();
    Author { name, institutions: inst }
}

pub fn generate(spec: &SynthSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = SynthCorpus::default();
    let mut seen_titles = HashSet::new();
    let venues: Vec<String> = (0..spec.venues.max(1)).map(|i| format!("VEN{i:02}")).collect();

    for i in 0..spec.papers {
        let id = format!("P{i:05}");
        let year = rng.gen_range(spec.first_year..=spec.last_year);
        let mut t = title(&mut rng);
        while !seen_titles.insert(crate::classify::normalize_title(&t)) {
            t = title(&mut rng);
        }
        let n_words = rng.gen_range(40..80);
        let mut abs = sentence(&mut rng, n_words);
        if rng.gen_bool(spec.rai_share) {
            let (topic, kw) = DEFAULT_KEYWORDS[rng.gen_range(0..DEFAULT_KEYWORDS.len())];
            let prefix = PREFIXES[rng.gen_range(0..PREFIXES.len())];
            abs = format!(
                "{prefix} {kw} {abs} we study {prefix} {kw} and {kw} in {prefix} systems"
            );
            out.planted_topics.insert(id.clone(), topic);
        }
        let n_auth = rng.gen_range(1..=4);
        let authors = (0..n_auth).map(|_| author(&mut rng, spec.institutions)).collect();
        // cite earlier papers plus a few external ids
        let mut refs: Vec<String> = Vec::new();
        if i > 0 {
            for _ in 0..rng.gen_range(2..=8) {
                refs.push(format!("P{:05}", rng.gen_range(0..i)));
            }
        }
        for _ in 0..rng.gen_range(0..3) {
            refs.push(format!("EXT{:06}", rng.gen_range(0..1_000_000)));
        }
        refs.sort();
        refs.dedup();
        let venue = venues[(rng.gen_range(0..venues.len()) + rng.gen_range(0..venues.len())) / 2].clone();
        out.papers.push(PaperRecord {
            paper_id: id,
            title: t,
            abstract_text: abs,
            venue,
            year,
            authors,
            citation_count: rng.gen_range(0..200u64).pow(2) / 100 + rng.gen_range(0..15),
            outgoing_refs: refs,
            is_open_access: rng.gen_bool(0.5),
            doi: None,
            arxiv: None,
            language: Some("en".into()),
            pub_type: None,
        });
    }

    // patents: planted references to a subset of papers, plus decoys
    let cited: Vec<usize> = (0..spec.papers).filter(|_| rng.gen_bool(spec.patent_cited_share)).collect();
    let mut patents: Vec<(NaiveDate, Vec<ReferenceString>, Vec<String>)> = (0..spec.patents)
        .map(|_| (NaiveDate::MIN, Vec::new(), Vec::new()))
        .collect();
    if spec.patents > 0 {
        for &pi in &cited {
            let slot = rng.gen_range(0..spec.patents);
            let p = &out.papers[pi];
            let edits = rng.gen_range(0..=spec.max_title_edits);
            let mut names: Vec<String> = p.authors.iter().map(|a| a.name.clone()).collect();
            names.shuffle(&mut rng);
            names.truncate(rng.gen_range(1..=names.len()));
            patents[slot].1.push(ReferenceString {
                raw: format!("{}. {}.", names.join(", "), p.title),
                extracted_title: perturb(&p.title, edits, &mut rng),
                extracted_authors: names,
            });
            patents[slot].2.push(p.paper_id.clone());
        }
    }
    for (k, (date_slot, refs, cited_ids)) in patents.iter_mut().enumerate() {
        for _ in 0..rng.gen_range(1..=3) {
            let decoy = title(&mut rng);
            let names = vec![format!("{} {}", FIRST.choose(&mut rng).unwrap(), LAST.choose(&mut rng).unwrap())];
            refs.push(ReferenceString {
                raw: format!("{}. {decoy}.", names[0]),
                extracted_title: decoy,
                extracted_authors: names,
            });
        }
        if rng.gen_bool(0.2) {
            refs.push(ReferenceString {
                raw: "See also product documentation".into(),
                extracted_title: String::new(),
                extracted_authors: vec![],
            });
        }
        refs.shuffle(&mut rng);
        let min_year = cited_ids
            .iter()
            .map(|id| out.papers.iter().find(|p| &p.paper_id == id).unwrap().year)
            .max()
            .unwrap_or(spec.first_year);
        let year = (min_year + rng.gen_range(0..=6)).min(spec.last_year);
        *date_slot = date(&mut rng, year);
        let patent_id = format!("US{:07}", 9_000_000 + k);
        for id in cited_ids.iter() {
            out.patent_links.insert((id.clone(), patent_id.clone()));
        }
        out.patents.push(PatentRecord {
            patent_id,
            country_code: "US".into(),
            pub_date: *date_slot,
            inventors: vec![format!("{} {}", FIRST.choose(&mut rng).unwrap(), LAST.choose(&mut rng).unwrap())],
            title: title(&mut rng),
            abstract_text: sentence(&mut rng, 30),
            npl_refs: std::mem::take(refs),
        });
    }

    for p in &out.papers {
        if !rng.gen_bool(spec.repo_share) {
            continue;
        }
        for r in 0..rng.gen_range(1..=3) {
            let created = (p.year + rng.gen_range(0..=2)).min(spec.last_year);
            let star = rng
                .gen_bool(0.7)
                .then(|| (created + rng.gen_range(0..=1)).min(spec.last_year));
            let url = format!("https://github.com/lab{}/{}-{r}", rng.gen_range(0..50), p.paper_id.to_lowercase());
            let created_at = date(&mut rng, created);
            let first_star_or_fork_at = star.map(|y| if y == created { created_at } else { date(&mut rng, y) });
            out.repo_links.insert((p.paper_id.clone(), url.clone()));
            out.repos.push(RepoLink {
                paper_id: p.paper_id.clone(),
                repo_url: url,
                created_at,
                first_star_or_fork_at,
            });
        }
    }
    out
}

/// Writes `papers.jsonl`, `patents.jsonl`, `repos.jsonl` and the planted
/// links (`planted_links.csv`) into `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let jsonl = |name: &str, rows: &mut dyn Iterator<Item = serde_json::Result<String>>| -> Result<()> {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        for row in rows {
            let row = row.map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(w, "{row}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    };
    jsonl("papers.jsonl", &mut corpus.papers.iter().map(serde_json::to_string))?;
    jsonl("patents.jsonl", &mut corpus.patents.iter().map(serde_json::to_string))?;
    jsonl("repos.jsonl", &mut corpus.repos.iter().map(serde_json::to_string))?;
    let path = dir.join("planted_links.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::invalid(e.to_string()))?;
    let rows = corpus
        .patent_links
        .iter()
        .map(|l| (l, LinkKind::Patents))
        .chain(corpus.repo_links.iter().map(|l| (l, LinkKind::Repositories)));
    w.write_record(["paper_id", "target_id", "kind"]).map_err(|e| Error::invalid(e.to_string()))?;
    for ((paper, target), kind) in rows {
        w.write_record([paper.as_str(), target.as_str(), kind.as_str()])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

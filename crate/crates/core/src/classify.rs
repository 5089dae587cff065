//! Responsible-AI topic assignment from keyword-embedding similarity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PaperRecord;
use crate::embedding::{better, keys, percentile_threshold, SimilarityScore, VectorStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topic {
    Fairness,
    Privacy,
    Accountability,
    Explainability,
    Sustainability,
}

impl Topic {
    pub const ALL: [Topic; 5] = [
        Topic::Fairness,
        Topic::Privacy,
        Topic::Accountability,
        Topic::Explainability,
        Topic::Sustainability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Fairness => "Fairness",
            Topic::Privacy => "Privacy",
            Topic::Explainability => "Explainability",
            Topic::Accountability => "Accountability",
            Topic::Sustainability => "Sustainability",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown topic `{s}`")))
    }
}

/// Keyword table bundled with the crate: 25 keywords over five topics.
pub const DEFAULT_KEYWORDS: &[(Topic, &str)] = &[
    (Topic::Fairness, "fairness"),
    (Topic::Fairness, "equality"),
    (Topic::Fairness, "equity"),
    (Topic::Fairness, "equitable"),
    (Topic::Privacy, "privacy"),
    (Topic::Privacy, "anonymity"),
    (Topic::Privacy, "confidentiality"),
    (Topic::Privacy, "confidential"),
    (Topic::Explainability, "explainability"),
    (Topic::Explainability, "explainable"),
    (Topic::Accountability, "accountable"),
    (Topic::Accountability, "accountability"),
    (Topic::Accountability, "transparency"),
    (Topic::Accountability, "auditability"),
    (Topic::Accountability, "governance"),
    (Topic::Accountability, "compliance"),
    (Topic::Accountability, "accountability mechanisms"),
    (Topic::Accountability, "algorithmic accountability"),
    (Topic::Sustainability, "green"),
    (Topic::Sustainability, "energy-efficient"),
    (Topic::Sustainability, "carbon footprint"),
    (Topic::Sustainability, "environmental impact"),
    (Topic::Sustainability, "eco-friendly"),
    (Topic::Sustainability, "energy consumption"),
    (Topic::Sustainability, "green computing"),
];

/// Generic terms dropped from the framework vocabulary because they match
/// ordinary AI papers. Kept for reference only; `confidentiality` also
/// appears in the default table and the table wins.
pub const REMOVED_KEYWORDS: &[&str] = &[
    "validation",
    "reliability",
    "correctness",
    "accuracy",
    "robustness",
    "generalizability",
    "authenticity",
    "quality",
    "measurability",
    "dependability",
    "capability",
    "safety",
    "security",
    "resilience",
    "confidentiality",
    "integrity",
    "availability",
    "usability",
    "controllability",
];

pub const PREFIXES: [&str; 2] = ["artificial intelligence", "machine learning"];

pub fn default_table() -> Vec<(Topic, String)> {
    DEFAULT_KEYWORDS.iter().map(|&(t, k)| (t, k.to_owned())).collect()
}

/// Parses a `topic<TAB or comma>keyword` table. `#` starts a comment line.
pub fn parse_keyword_table<R: BufRead>(reader: R) -> Result<Vec<(Topic, String)>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (topic, kw) = line.split_once(['\t', ',']).ok_or_else(|| Error::Malformed {
            line: idx + 1,
            message: "expected two columns".into(),
        })?;
        if topic.trim().eq_ignore_ascii_case("topic") && idx == 0 {
            continue;
        }
        rows.push((topic.parse()?, kw.trim().to_owned()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub topic: Topic,
    pub keyword: String,
    pub variants: Vec<String>,
}

/// Expands each keyword into its two prefixed query strings.
pub fn build_keyword_queries(table: &[(Topic, String)]) -> Result<Vec<KeywordQuery>> {
    if table.is_empty() {
        return Err(Error::invalid("keyword table is empty"));
    }
    let mut seen: HashMap<String, Topic> = HashMap::new();
    let mut out = Vec::with_capacity(table.len());
    for (topic, kw) in table {
        let kw = kw.trim().to_lowercase();
        if kw.is_empty() {
            return Err(Error::invalid("empty keyword"));
        }
        if let Some(prev) = seen.insert(kw.clone(), *topic) {
            return Err(Error::invalid(format!(
                "keyword `{kw}` listed twice ({prev} and {topic})"
            )));
        }
        out.push(KeywordQuery {
            topic: *topic,
            variants: PREFIXES.iter().map(|p| format!("{p} {kw}")).collect(),
            keyword: kw,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub paper_id: String,
    pub topic: Topic,
    pub best_keyword: String,
    pub score: SimilarityScore,
}

/// Assigns the topic of the keyword variant most similar to the paper's
/// document vector. Ties go to the lexicographically smallest variant key.
pub fn assign_topic(paper_id: &str, store: &VectorStore, queries: &[KeywordQuery]) -> Result<TopicAssignment> {
    if queries.is_empty() {
        return Err(Error::invalid("no keyword queries"));
    }
    let doc = store.require(&keys::document(paper_id))?;
    let mut best: Option<(String, f64, &KeywordQuery)> = None;
    for q in queries {
        for variant in &q.variants {
            let key = keys::keyword(variant);
            let v = store.require(&key)?;
            let s = crate::embedding::cosine_similarity(doc, v)?.value();
            let take = match &best {
                None => true,
                Some((bk, bs, _)) => better((&key, s), (bk, *bs)),
            };
            if take {
                best = Some((key, s, q));
            }
        }
    }
    let (_, score, q) = best.expect("non-empty queries");
    Ok(TopicAssignment {
        paper_id: paper_id.to_owned(),
        topic: q.topic,
        best_keyword: q.keyword.clone(),
        score: SimilarityScore::new(score),
    })
}

/// Assigns every paper in parallel; output follows input order.
pub fn assign_all<S: AsRef<str> + Sync>(
    paper_ids: &[S],
    store: &VectorStore,
    queries: &[KeywordQuery],
) -> Result<Vec<TopicAssignment>> {
    paper_ids
        .par_iter()
        .map(|id| assign_topic(id.as_ref(), store, queries))
        .collect()
}

/// High-confidence assignments: scores strictly above the nearest-rank
/// percentile of all scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaiCorpus {
    pub threshold: f64,
    pub percentile: f64,
    pub assignments: Vec<TopicAssignment>,
}

impl RaiCorpus {
    pub fn topic_of(&self) -> HashMap<&str, Topic> {
        self.assignments.iter().map(|a| (a.paper_id.as_str(), a.topic)).collect()
    }

    pub fn topic_counts(&self) -> BTreeMap<Topic, usize> {
        let mut m = BTreeMap::new();
        for a in &self.assignments {
            *m.entry(a.topic).or_default() += 1;
        }
        m
    }

    /// Keeps only assignments whose paper id passes `keep`.
    pub fn retain_ids(&mut self, keep: &HashSet<&str>) {
        self.assignments.retain(|a| keep.contains(a.paper_id.as_str()));
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

pub fn select_rai(assignments: &[TopicAssignment], percentile: f64) -> Result<RaiCorpus> {
    let scores: Vec<f64> = assignments.iter().map(|a| a.score.value()).collect();
    let threshold = percentile_threshold(&scores, percentile)?;
    Ok(RaiCorpus {
        threshold,
        percentile,
        assignments: assignments
            .iter()
            .filter(|a| a.score.value() > threshold)
            .cloned()
            .collect(),
    })
}

/// Drops papers with fewer citations than years since publication.
pub fn quality_filter<'a>(
    papers: impl IntoIterator<Item = &'a PaperRecord>,
    reference_year: i32,
) -> Vec<&'a PaperRecord> {
    papers
        .into_iter()
        .filter(|p| p.citation_count as i64 >= (reference_year - p.year) as i64)
        .collect()
}

/// Lowercased title with every run of non-alphanumerics collapsed to one space.
pub fn normalize_title(title: &str) -> String {
    title
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One survivor per normalized title: most cited, then earliest, then
/// smallest id. Survivors keep their input order.
pub fn dedupe<'a>(papers: impl IntoIterator<Item = &'a PaperRecord>) -> Vec<&'a PaperRecord> {
    let papers: Vec<&PaperRecord> = papers.into_iter().collect();
    let mut best: HashMap<String, &PaperRecord> = HashMap::new();
    for &p in &papers {
        let key = normalize_title(&p.title);
        match best.get(&key) {
            Some(cur) if !survives(p, cur) => {}
            _ => {
                best.insert(key, p);
            }
        }
    }
    papers
        .into_iter()
        .filter(|p| std::ptr::eq(*p, best[&normalize_title(&p.title)]))
        .collect()
}

fn survives(a: &PaperRecord, b: &PaperRecord) -> bool {
    (std::cmp::Reverse(a.citation_count), a.year, &a.paper_id)
        < (std::cmp::Reverse(b.citation_count), b.year, &b.paper_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, title: &str, year: i32, cites: u64) -> PaperRecord {
        PaperRecord {
            paper_id: id.into(),
            title: title.into(),
            abstract_text: "x".into(),
            venue: "V".into(),
            year,
            authors: vec![],
            citation_count: cites,
            outgoing_refs: vec![],
            is_open_access: false,
            doi: None,
            arxiv: None,
            language: None,
            pub_type: None,
        }
    }

    #[test]
    fn prepending_rule() {
        let q = build_keyword_queries(&[(Topic::Fairness, "fairness".into())]).unwrap();
        assert_eq!(
            q[0].variants,
            ["artificial intelligence fairness", "machine learning fairness"]
        );
        assert!(build_keyword_queries(&[]).is_err());
    }

    #[test]
    fn default_table_sizes() {
        let q = build_keyword_queries(&default_table()).unwrap();
        assert_eq!(q.len(), 25);
        assert_eq!(q.iter().map(|k| k.variants.len()).sum::<usize>(), 50);
    }

    #[test]
    fn duplicate_keyword_across_topics_is_error() {
        let t = vec![(Topic::Fairness, "equity".into()), (Topic::Privacy, "Equity".into())];
        assert!(build_keyword_queries(&t).is_err());
    }

    #[test]
    fn table_parsing() {
        let src = "topic\tkeyword\nFairness\tfairness\n# note\nprivacy, anonymity\n";
        let t = parse_keyword_table(src.as_bytes()).unwrap();
        assert_eq!(t, vec![(Topic::Fairness, "fairness".into()), (Topic::Privacy, "anonymity".into())]);
        assert!(parse_keyword_table("Ethics\tx\n".as_bytes()).is_err());
    }

    fn store_with(doc: &[f32], kws: &[(&str, [f32; 3])]) -> VectorStore {
        let mut s = VectorStore::new(3, "t").unwrap();
        s.insert(keys::document("p"), doc).unwrap();
        for (v, vec) in kws {
            s.insert(keys::keyword(v), vec).unwrap();
        }
        s
    }

    #[test]
    fn assign_equal_vector_gets_score_one() {
        let q = build_keyword_queries(&[
            (Topic::Privacy, "privacy".into()),
            (Topic::Fairness, "fairness".into()),
        ])
        .unwrap();
        let s = store_with(
            &[0.0, 1.0, 0.0],
            &[
                ("artificial intelligence privacy", [0.0, 1.0, 0.0]),
                ("machine learning privacy", [0.0, 0.8, 0.6]),
                ("artificial intelligence fairness", [1.0, 0.0, 0.0]),
                ("machine learning fairness", [0.6, 0.0, 0.8]),
            ],
        );
        let a = assign_topic("p", &s, &q).unwrap();
        assert_eq!(a.topic, Topic::Privacy);
        assert_eq!(a.best_keyword, "privacy");
        assert!((a.score.value() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn assign_orthogonal_uses_tie_rule() {
        let q = build_keyword_queries(&[
            (Topic::Privacy, "privacy".into()),
            (Topic::Fairness, "fairness".into()),
        ])
        .unwrap();
        let s = store_with(
            &[0.0, 0.0, 1.0],
            &[
                ("artificial intelligence privacy", [0.0, 1.0, 0.0]),
                ("machine learning privacy", [1.0, 0.0, 0.0]),
                ("artificial intelligence fairness", [1.0, 0.0, 0.0]),
                ("machine learning fairness", [0.0, 1.0, 0.0]),
            ],
        );
        let a = assign_topic("p", &s, &q).unwrap();
        assert_eq!(a.score.value(), 0.0);
        // "kw:artificial intelligence fairness" sorts first
        assert_eq!(a.topic, Topic::Fairness);
    }

    #[test]
    fn assign_missing_vector_names_key() {
        let q = build_keyword_queries(&[(Topic::Privacy, "privacy".into())]).unwrap();
        let s = store_with(&[0.0, 0.0, 1.0], &[("artificial intelligence privacy", [0.0, 1.0, 0.0])]);
        match assign_topic("p", &s, &q) {
            Err(Error::MissingVector(k)) => assert_eq!(k, "kw:machine learning privacy"),
            other => panic!("{other:?}"),
        }
    }

    fn assignment(id: usize, score: f64) -> TopicAssignment {
        TopicAssignment {
            paper_id: format!("p{id}"),
            topic: Topic::Fairness,
            best_keyword: "fairness".into(),
            score: SimilarityScore::new(score),
        }
    }

    #[test]
    fn select_keeps_strictly_above_cutoff() {
        let a: Vec<_> = (1..=100).map(|i| assignment(i, i as f64 / 100.0)).collect();
        let r = select_rai(&a, 99.0).unwrap();
        assert_eq!(r.assignments.len(), 1);
        assert_eq!(r.assignments[0].paper_id, "p100");

        let flat: Vec<_> = (0..10).map(|i| assignment(i, 0.3)).collect();
        assert!(select_rai(&flat, 99.0).unwrap().assignments.is_empty());
    }

    #[test]
    fn quality_filter_boundaries() {
        let papers = [rec("a", "t", 2020, 3), rec("b", "t", 2015, 7), rec("c", "t", 2022, 0)];
        let kept: Vec<_> = quality_filter(&papers, 2023).into_iter().map(|p| p.paper_id.as_str()).collect();
        assert_eq!(kept, ["a"]);
    }

    #[test]
    fn dedupe_cases() {
        let p = [rec("a", "A Study of X.", 2019, 1), rec("b", "a study of  x", 2019, 1)];
        let d = dedupe(&p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].paper_id, "a");

        let distinct = [rec("a", "one", 2019, 1), rec("b", "two", 2019, 1)];
        assert_eq!(dedupe(&distinct).len(), 2);
    }

    #[test]
    fn dedupe_clash_fixture() {
        // five records, one title: highest citations wins, then earliest
        // year, then smallest id
        let p = [
            rec("e", "Same Title", 2018, 5),
            rec("d", "same title!", 2017, 9),
            rec("c", "SAME   TITLE", 2016, 9),
            rec("b", "same-title", 2016, 9),
            rec("a", "same title", 2019, 2),
        ];
        let d = dedupe(&p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].paper_id, "b");
    }
}

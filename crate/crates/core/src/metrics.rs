//! Impact ratios, significance tests, survival curves and institution
//! rankings.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classify::{RaiCorpus, Topic};
use crate::corpus::{CorpusPartition, PaperCorpus};
use crate::error::{Error, Result};
use crate::linkage::LinkageResult;
use crate::special::{normal_two_sided_p, student_t_two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub part: u64,
    pub whole: u64,
}

impl Share {
    pub fn new(part: u64, whole: u64) -> Result<Self> {
        if part > whole {
            return Err(Error::invalid(format!("share {part}/{whole} exceeds 1")));
        }
        Ok(Share { part, whole })
    }

    /// `part / whole`; an empty whole yields NaN.
    pub fn ratio(self) -> f64 {
        self.part as f64 / self.whole as f64
    }

    pub fn percent(self) -> f64 {
        100.0 * self.part as f64 / self.whole as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRatios {
    /// `|H|X| / |H|`
    pub studied: Share,
    /// `|H'|X| / |H'|`, absent when `H'` is empty.
    pub complement: Option<Share>,
}

impl ImpactRatios {
    pub fn r_h(&self) -> f64 {
        self.studied.ratio()
    }

    pub fn r_hprime(&self) -> Option<f64> {
        self.complement.map(Share::ratio)
    }
}

fn check_kind(partition: &CorpusPartition, linkage: &LinkageResult) -> Result<()> {
    if partition.kind != linkage.kind {
        return Err(Error::invalid(format!(
            "partition is for {} but linkage is for {}",
            partition.kind, linkage.kind
        )));
    }
    Ok(())
}

/// Share of studied (and complement) papers with at least one link.
pub fn impact_ratio(partition: &CorpusPartition, linkage: &LinkageResult) -> Result<ImpactRatios> {
    check_kind(partition, linkage)?;
    if partition.studied.is_empty() {
        return Err(Error::invalid("studied set H is empty"));
    }
    let linked = linkage.linked_papers();
    let count = |set: &BTreeSet<String>| set.iter().filter(|id| linked.contains(id.as_str())).count() as u64;
    let studied = Share::new(count(&partition.studied), partition.studied.len() as u64)?;
    let complement = if partition.complement.is_empty() {
        None
    } else {
        Some(Share::new(count(&partition.complement), partition.complement.len() as u64)?)
    };
    Ok(ImpactRatios { studied, complement })
}

/// `c(H|X) / c(H)`: citations received by linked studied papers over all
/// citations received by studied papers.
pub fn citation_weighted_ratio(
    partition: &CorpusPartition,
    linkage: &LinkageResult,
    corpus: &PaperCorpus,
) -> Result<Share> {
    check_kind(partition, linkage)?;
    let linked = linkage.linked_papers();
    let mut total = 0u64;
    let mut part = 0u64;
    for id in &partition.studied {
        let c = corpus
            .get(id)
            .ok_or_else(|| Error::invalid(format!("paper `{id}` not in corpus")))?
            .citation_count;
        total += c;
        if linked.contains(id.as_str()) {
            part += c;
        }
    }
    if total == 0 {
        return Err(Error::degenerate("c(H) = 0"));
    }
    Share::new(part, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for t-based tests.
    pub df: Option<f64>,
}

/// Pooled two-proportion z test, two-sided.
pub fn two_proportion_z_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("group size must be positive"));
    }
    if k1 > n1 || k2 > n2 {
        return Err(Error::invalid("successes exceed group size"));
    }
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    if k1 + k2 == 0 || k1 + k2 == n1 + n2 {
        return Err(Error::degenerate("pooled proportion is 0 or 1"));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    Ok(TestResult {
        statistic: z,
        p_value: normal_two_sided_p(z),
        df: None,
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("each sample needs at least two observations"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite observation"));
    }
    Ok(())
}

/// Unequal-variance t test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_samples(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if va == 0.0 && vb == 0.0 {
        return if ma == mb {
            Ok(TestResult {
                statistic: 0.0,
                p_value: 1.0,
                df: Some(na + nb - 2.0),
            })
        } else {
            Err(Error::degenerate("both samples constant with different means"))
        };
    }
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided_p(t, df),
        df: Some(df),
    })
}

/// Pooled-variance (Student) t test.
pub fn student_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_samples(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    if pooled == 0.0 {
        return if ma == mb {
            Ok(TestResult {
                statistic: 0.0,
                p_value: 1.0,
                df: Some(df),
            })
        } else {
            Err(Error::degenerate("both samples constant with different means"))
        };
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided_p(t, df),
        df: Some(df),
    })
}

/// Sample Pearson correlation with a two-sided p from the t transform.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("samples differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("pearson needs at least three pairs"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::degenerate("zero variance"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        student_t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(TestResult {
        statistic: r,
        p_value: p,
        df: Some(df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    /// Censored in `[time, next event time)`.
    pub censored: usize,
    pub survival: f64,
}

/// Kaplan-Meier step function. Only times with at least one event are
/// steps; `survival_at` is 1 before the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub cohort: usize,
    /// Censored before the first event time.
    pub censored_before_first: usize,
    pub steps: Vec<SurvivalStep>,
}

impl SurvivalCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.steps.partition_point(|s| s.time <= t);
        if idx == 0 {
            1.0
        } else {
            self.steps[idx - 1].survival
        }
    }
}

/// Kaplan-Meier estimate from `(time, is_event)` rows; `false` marks a
/// right-censored row. Rows censored at an event time count as at risk at
/// that time.
///
/// Between censorings the product telescopes, so each factor run is
/// evaluated as `S_start * (n_start - D) / n_start`. Without censoring this
/// is exactly the fraction still event-free.
pub fn kaplan_meier(rows: &[(f64, bool)]) -> Result<SurvivalCurve> {
    if rows.is_empty() {
        return Err(Error::invalid("empty cohort"));
    }
    if let Some((t, _)) = rows.iter().find(|(t, _)| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid(format!("invalid time {t}")));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut steps: Vec<SurvivalStep> = Vec::new();
    let mut censored_before_first = 0;
    let mut remaining = sorted.len();
    let mut survival = 1.0;
    let (mut block_surv, mut block_n, mut block_events) = (1.0, remaining, 0usize);
    let mut censored_since_block = false;

    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let (mut d, mut c) = (0, 0);
        while j < sorted.len() && sorted[j].0 == t {
            if sorted[j].1 {
                d += 1;
            } else {
                c += 1;
            }
            j += 1;
        }
        if d > 0 {
            if censored_since_block {
                block_surv = survival;
                block_n = remaining;
                block_events = 0;
                censored_since_block = false;
            }
            block_events += d;
            survival = block_surv * ((block_n - block_events) as f64 / block_n as f64);
            steps.push(SurvivalStep {
                time: t,
                at_risk: remaining,
                events: d,
                censored: c,
                survival,
            });
        } else if let Some(last) = steps.last_mut() {
            last.censored += c;
        } else {
            censored_before_first += c;
        }
        if c > 0 {
            censored_since_block = true;
        }
        remaining -= d + c;
        i = j;
    }
    Ok(SurvivalCurve {
        cohort: sorted.len(),
        censored_before_first,
        steps,
    })
}

/// Earliest time with `S(t) <= 0.5`.
pub fn median_crossing(curve: &SurvivalCurve) -> Option<f64> {
    curve.steps.iter().find(|s| s.survival <= 0.5).map(|s| s.time)
}

/// `1 - sum (c_i / C)^2`, evaluated as `(C^2 - sum c_i^2) / C^2` in exact
/// integer arithmetic before the final division.
pub fn gini_simpson(counts: &[u64]) -> Result<f64> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(Error::invalid("all topic counts are zero"));
    }
    let sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let t2 = total * total;
    Ok((t2 - sq) as f64 / t2 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    /// Mean of the patent and repository shares of the institution's papers.
    #[default]
    AverageShare,
    /// Papers going into patents plus papers going into repositories.
    TotalLinked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionRow {
    pub institution: String,
    pub papers_into_patents: u64,
    pub papers_into_repos: u64,
    pub total_linked: u64,
    pub topic_diversity: f64,
    pub total_rai_papers: u64,
    pub topic_counts: BTreeMap<Topic, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionRanking {
    pub rows: Vec<InstitutionRow>,
    /// RAI papers without any institution id.
    pub unknown_papers: u64,
}

/// Whole-count institution table: every paper counts once for each distinct
/// institution of its authors. The `top_n` institutions by linked papers
/// are kept and ordered by `rank_by`; ties go to more RAI papers, then the
/// smaller id.
pub fn rank_institutions(
    rai: &RaiCorpus,
    corpus: &PaperCorpus,
    patents: &LinkageResult,
    repos: &LinkageResult,
    top_n: usize,
    rank_by: RankBy,
) -> Result<InstitutionRanking> {
    let in_patents = patents.linked_papers();
    let in_repos = repos.linked_papers();
    let mut acc: BTreeMap<String, (u64, u64, u64, BTreeMap<Topic, u64>)> = BTreeMap::new();
    let mut unknown = 0;
    for a in &rai.assignments {
        let paper = corpus
            .get(&a.paper_id)
            .ok_or_else(|| Error::invalid(format!("paper `{}` not in corpus", a.paper_id)))?;
        let insts = paper.institutions();
        if insts.is_empty() {
            unknown += 1;
            continue;
        }
        let p = u64::from(in_patents.contains(a.paper_id.as_str()));
        let r = u64::from(in_repos.contains(a.paper_id.as_str()));
        for inst in insts {
            let e = acc.entry(inst.to_owned()).or_default();
            e.0 += p;
            e.1 += r;
            e.2 += 1;
            *e.3.entry(a.topic).or_default() += 1;
        }
    }
    let mut rows: Vec<InstitutionRow> = acc
        .into_iter()
        .map(|(inst, (p, r, total, topics))| {
            let counts: Vec<u64> = topics.values().copied().collect();
            Ok(InstitutionRow {
                institution: inst,
                papers_into_patents: p,
                papers_into_repos: r,
                total_linked: p + r,
                topic_diversity: gini_simpson(&counts)?,
                total_rai_papers: total,
                topic_counts: topics,
            })
        })
        .collect::<Result<_>>()?;
    let by_linked = |r: &InstitutionRow| (Reverse(r.total_linked), Reverse(r.total_rai_papers), r.institution.clone());
    rows.sort_by_key(by_linked);
    rows.truncate(top_n);
    match rank_by {
        RankBy::TotalLinked => {}
        RankBy::AverageShare => rows.sort_by(|a, b| {
            // (pa + ra) / (2 ta) vs (pb + rb) / (2 tb), cross-multiplied
            let lhs = a.total_linked as u128 * b.total_rai_papers as u128;
            let rhs = b.total_linked as u128 * a.total_rai_papers as u128;
            rhs.cmp(&lhs)
                .then(b.total_rai_papers.cmp(&a.total_rai_papers))
                .then_with(|| a.institution.cmp(&b.institution))
        }),
    }
    Ok(InstitutionRanking {
        rows,
        unknown_papers: unknown,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub rank: usize,
    pub venue: String,
    pub citations: u64,
    pub cumulative_fraction: f64,
}

/// Venues by descending citations with the cumulative share covered.
pub fn venue_citation_coverage(totals: &[(String, u64)]) -> Result<Vec<CoveragePoint>> {
    let total: u128 = totals.iter().map(|(_, c)| *c as u128).sum();
    if total == 0 {
        return Err(Error::invalid("all venue citation totals are zero"));
    }
    let mut sorted: Vec<&(String, u64)> = totals.iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut cum = 0u128;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, (v, c))| {
            cum += *c as u128;
            CoveragePoint {
                rank: i + 1,
                venue: v.clone(),
                citations: *c,
                cumulative_fraction: cum as f64 / total as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::TopicAssignment;
    use crate::corpus::{Author, LinkKind, PaperRecord};
    use crate::embedding::SimilarityScore;
    use crate::linkage::{LinkEdge, LinkageStats};

    fn paper(id: &str, cites: u64, insts: &[&[&str]]) -> PaperRecord {
        PaperRecord {
            paper_id: id.into(),
            title: id.into(),
            abstract_text: String::new(),
            venue: "V".into(),
            year: 2020,
            authors: insts
                .iter()
                .map(|i| Author {
                    name: "n".into(),
                    institutions: i.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
            citation_count: cites,
            outgoing_refs: vec![],
            is_open_access: false,
            doi: None,
            arxiv: None,
            language: None,
            pub_type: None,
        }
    }

    fn linkage(kind: LinkKind, linked: &[&str]) -> LinkageResult {
        LinkageResult {
            kind,
            horizon_year: 2022,
            edges: linked
                .iter()
                .map(|p| LinkEdge {
                    paper_id: p.to_string(),
                    target_id: format!("t-{p}"),
                    title_distance: None,
                    author_similarity: None,
                    event_time: 0,
                })
                .collect(),
            first_events: BTreeMap::new(),
            stats: LinkageStats::default(),
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn impact_shares_round_to_one_decimal() {
        let cases = [(27, 557, 4.8), (283, 538, 52.6), (4859, 9348, 52.0), (11843, 14861, 79.7)];
        for (k, n, pct) in cases {
            let s = Share::new(k, n).unwrap();
            assert_eq!(format!("{:.1}", s.percent()), format!("{pct:.1}"));
        }
        assert!(Share::new(3, 2).is_err());
    }

    #[test]
    fn impact_ratio_counts_linked_members() {
        let studied: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let part = CorpusPartition::from_members(["a", "b", "c", "d", "e", "f"], &studied, LinkKind::Patents).unwrap();
        let r = impact_ratio(&part, &linkage(LinkKind::Patents, &["a", "e", "zz"])).unwrap();
        assert_eq!(r.studied, Share { part: 1, whole: 4 });
        assert_eq!(r.complement, Some(Share { part: 1, whole: 2 }));
        let none = impact_ratio(&part, &linkage(LinkKind::Patents, &[])).unwrap();
        assert_eq!(none.r_h(), 0.0);
        assert!(impact_ratio(&part, &linkage(LinkKind::Repositories, &[])).is_err());
        let empty = CorpusPartition::from_members(["a"], &BTreeSet::new(), LinkKind::Patents).unwrap();
        assert!(impact_ratio(&empty, &linkage(LinkKind::Patents, &[])).is_err());
    }

    #[test]
    fn citation_weighted_share() {
        let corpus = PaperCorpus::from_records(vec![paper("a", 30, &[]), paper("b", 10, &[]), paper("c", 0, &[])]).unwrap();
        let studied: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let part = CorpusPartition::from_members(["a", "b", "c"], &studied, LinkKind::Repositories).unwrap();
        let s = citation_weighted_ratio(&part, &linkage(LinkKind::Repositories, &["a"]), &corpus).unwrap();
        assert_eq!(s, Share { part: 30, whole: 40 });
        let all = citation_weighted_ratio(&part, &linkage(LinkKind::Repositories, &["a", "b"]), &corpus).unwrap();
        assert_eq!(all.ratio(), 1.0);
        let zero: BTreeSet<String> = ["c"].iter().map(|s| s.to_string()).collect();
        let part = CorpusPartition::from_members(["a", "b", "c"], &zero, LinkKind::Repositories).unwrap();
        assert!(citation_weighted_ratio(&part, &linkage(LinkKind::Repositories, &["c"]), &corpus).is_err());
    }

    #[test]
    fn z_test_examples() {
        let eq = two_proportion_z_test(10, 100, 10, 100).unwrap();
        assert_eq!(eq.statistic, 0.0);
        assert!(close(eq.p_value, 1.0, 1e-15));
        // p = 0.25, se = sqrt(0.25 * 0.75 * 0.02), z = 0.1 / se
        let z = two_proportion_z_test(30, 100, 20, 100).unwrap();
        assert!(close(z.statistic, 0.1 / (0.00375f64).sqrt(), 1e-12));
        assert!(close(z.statistic, 1.632993, 1e-6));
        let swapped = two_proportion_z_test(20, 100, 30, 100).unwrap();
        assert_eq!(swapped.statistic, -z.statistic);
        assert_eq!(swapped.p_value, z.p_value);
        assert!(matches!(two_proportion_z_test(0, 10, 0, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn welch_examples() {
        let same = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert!(close(same.p_value, 1.0, 1e-12));
        // means 2 and 5, variances 1 and 1: t = -3 / sqrt(2/3)
        let t = welch_t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(close(t.statistic, -3.0 / (2.0f64 / 3.0).sqrt(), 1e-12));
        assert!(close(t.statistic, -3.674, 1e-3));
        assert!(close(t.df.unwrap(), 4.0, 1e-12));
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(welch_t_test(&[2.0, 2.0], &[2.0, 2.0]).unwrap().statistic, 0.0);
        assert!(welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &up).unwrap().statistic, 1.0);
        assert_eq!(pearson(&x, &down).unwrap().statistic, -1.0);
        assert!(pearson(&x, &[1.0; 10]).is_err());
        assert!(pearson(&x[..2], &up[..2]).is_err());
    }

    #[test]
    fn kaplan_meier_hand_example() {
        let c = kaplan_meier(&[(1.0, true), (2.0, true), (3.0, false), (3.0, false)]).unwrap();
        assert_eq!(c.survival_at(0.5), 1.0);
        assert_eq!(c.survival_at(1.0), 0.75);
        assert_eq!(c.survival_at(2.0), 0.5);
        assert_eq!(c.survival_at(10.0), 0.5);
        assert_eq!(median_crossing(&c), Some(2.0));
        assert_eq!(c.steps[1].censored, 2);
    }

    #[test]
    fn kaplan_meier_edge_cases() {
        let all_censored = kaplan_meier(&[(1.0, false), (4.0, false)]).unwrap();
        assert!(all_censored.steps.is_empty());
        assert_eq!(all_censored.survival_at(100.0), 1.0);
        assert_eq!(median_crossing(&all_censored), None);
        let single = kaplan_meier(&[(0.0, true)]).unwrap();
        assert_eq!(single.survival_at(0.0), 0.0);
        assert!(kaplan_meier(&[]).is_err());
        assert!(kaplan_meier(&[(-1.0, true)]).is_err());
        // censoring between events shrinks the risk set
        let c = kaplan_meier(&[(1.0, true), (2.0, false), (3.0, true), (4.0, true)]).unwrap();
        assert_eq!(c.steps[1].at_risk, 2);
        assert!(close(c.survival_at(3.0), 0.75 * 0.5, 1e-15));
    }

    #[test]
    fn median_crossing_boundary_and_never() {
        let half = kaplan_meier(&[(2.0, true), (5.0, false)]).unwrap();
        assert_eq!(median_crossing(&half), Some(2.0));
        let high = kaplan_meier(&[(1.0, true), (9.0, false), (9.0, false), (9.0, false), (9.0, false), (9.0, false)]).unwrap();
        assert!(high.survival_at(9.0) >= 0.8);
        assert_eq!(median_crossing(&high), None);
    }

    #[test]
    fn gini_simpson_examples() {
        assert_eq!(gini_simpson(&[7]).unwrap(), 0.0);
        assert_eq!(gini_simpson(&[4, 4, 4, 4, 4]).unwrap(), 0.8);
        assert!(close(gini_simpson(&[3, 2, 1]).unwrap(), 1.0 - 14.0 / 36.0, 1e-15));
        assert_eq!(gini_simpson(&[3, 2, 1]).unwrap(), gini_simpson(&[9, 6, 3]).unwrap());
        assert!(gini_simpson(&[0, 0]).is_err());
    }

    fn rai(ids: &[(&str, Topic)]) -> RaiCorpus {
        RaiCorpus {
            threshold: 0.0,
            percentile: 99.0,
            assignments: ids
                .iter()
                .map(|(id, t)| TopicAssignment {
                    paper_id: id.to_string(),
                    topic: *t,
                    best_keyword: "k".into(),
                    score: SimilarityScore::new(0.9),
                })
                .collect(),
        }
    }

    #[test]
    fn institutions_get_whole_counts() {
        let corpus = PaperCorpus::from_records(vec![paper("a", 1, &[&["I1"], &["I2", "I1"]])]).unwrap();
        let r = rai(&[("a", Topic::Privacy)]);
        let pat = linkage(LinkKind::Patents, &["a"]);
        let rep = linkage(LinkKind::Repositories, &[]);
        let t = rank_institutions(&r, &corpus, &pat, &rep, 50, RankBy::AverageShare).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.papers_into_patents == 1 && r.total_rai_papers == 1));
        assert!(t.rows.iter().all(|r| r.total_linked == r.papers_into_patents + r.papers_into_repos));
    }

    #[test]
    fn institutions_without_ids_go_to_unknown() {
        let corpus = PaperCorpus::from_records(vec![paper("a", 1, &[&["I1"]]), paper("b", 1, &[&[]])]).unwrap();
        let r = rai(&[("a", Topic::Privacy), ("b", Topic::Fairness)]);
        let t = rank_institutions(
            &r,
            &corpus,
            &linkage(LinkKind::Patents, &[]),
            &linkage(LinkKind::Repositories, &["a", "b"]),
            50,
            RankBy::TotalLinked,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.unknown_papers, 1);
    }

    #[test]
    fn institutions_ranked_against_hand_order() {
        // (institution, papers, linked-to-patents, linked-to-repos)
        let spec: [(&str, usize, usize, usize); 10] = [
            ("I0", 10, 2, 6),
            ("I1", 4, 1, 3),
            ("I2", 8, 0, 2),
            ("I3", 2, 1, 1),
            ("I4", 6, 3, 3),
            ("I5", 5, 0, 0),
            ("I6", 3, 0, 3),
            ("I7", 9, 1, 1),
            ("I8", 4, 2, 2),
            ("I9", 1, 0, 1),
        ];
        let mut papers = Vec::new();
        let mut ids = Vec::new();
        let (mut pl, mut rl) = (Vec::new(), Vec::new());
        for (inst, n, p, r) in spec {
            for k in 0..n {
                let id = format!("{inst}-{k}");
                papers.push(paper(&id, 1, &[&[inst]]));
                if k < p {
                    pl.push(id.clone());
                }
                if k < r {
                    rl.push(id.clone());
                }
                ids.push(id);
            }
        }
        let corpus = PaperCorpus::from_records(papers).unwrap();
        let r = rai(&ids.iter().map(|i| (i.as_str(), Topic::Fairness)).collect::<Vec<_>>());
        let pat = linkage(LinkKind::Patents, &pl.iter().map(String::as_str).collect::<Vec<_>>());
        let rep = linkage(LinkKind::Repositories, &rl.iter().map(String::as_str).collect::<Vec<_>>());
        let order = |rank_by| {
            rank_institutions(&r, &corpus, &pat, &rep, 10, rank_by)
                .unwrap()
                .rows
                .iter()
                .map(|r| r.institution.clone())
                .collect::<Vec<_>>()
        };
        // linked/total by hand: I3 1.0, I6 1.0, I9 1.0, I8 1.0, I4 1.0, I1 1.0, I0 0.8,
        // I2 0.25, I7 0.22, I5 0; equal shares go to more papers, then id
        assert_eq!(
            order(RankBy::AverageShare),
            ["I4", "I1", "I8", "I6", "I3", "I9", "I0", "I2", "I7", "I5"]
        );
        // totals: I0 8, I4 6, I1 4, I8 4, I6 3, I2 2, I3 2, I7 2, I9 1, I5 0
        assert_eq!(
            order(RankBy::TotalLinked),
            ["I0", "I4", "I1", "I8", "I6", "I7", "I2", "I3", "I9", "I5"]
        );
        let top3 = rank_institutions(&r, &corpus, &pat, &rep, 3, RankBy::TotalLinked).unwrap();
        assert_eq!(top3.rows.len(), 3);
    }

    #[test]
    fn coverage_curve() {
        let one = venue_citation_coverage(&[("A".into(), 5)]).unwrap();
        assert_eq!(one[0].cumulative_fraction, 1.0);
        let eq: Vec<(String, u64)> = (0..4).map(|i| (format!("V{i}"), 7)).collect();
        let cov = venue_citation_coverage(&eq).unwrap();
        for (j, p) in cov.iter().enumerate() {
            assert!(close(p.cumulative_fraction, (j + 1) as f64 / 4.0, 1e-15));
        }
        let skew = venue_citation_coverage(&[("A".into(), 1), ("B".into(), 8), ("C".into(), 1)]).unwrap();
        assert_eq!(skew[0].venue, "B");
        assert!(close(skew[0].cumulative_fraction, 0.8, 1e-15));
        assert!(venue_citation_coverage(&[("A".into(), 0)]).is_err());
    }
}

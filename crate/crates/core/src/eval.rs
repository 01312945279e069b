//! Retrieval metrics: top-k accuracy, MRR@k, precision@k and R-precision.
//!
//! Answer-based metrics work on per-query relevance lists (`true` where the
//! hit at that rank contains a gold answer); R-precision compares document
//! hits with the gold document set directly.

use std::collections::{BTreeSet, HashMap};

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{GidxError, Result};
use crate::index::RetrievalResult;
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default)]
    pub gold_docs: BTreeSet<String>,
}

impl Judgment {
    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() && self.gold_docs.is_empty() {
            return Err(GidxError::validation(format!(
                "judgment for {} has neither answers nor gold documents",
                self.query_id
            )));
        }
        Ok(())
    }
}

/// Per-rank relevance for each result, in result order.
///
/// A hit is relevant when its text contains a normalized answer; for a
/// judgment without answers, when the hit id is a gold document.
pub fn relevance_lists(
    results: &[RetrievalResult],
    judgments: &[Judgment],
    unit_text: impl Fn(&str) -> Option<String>,
) -> Result<Vec<Vec<bool>>> {
    let by_query = index_judgments(judgments)?;
    results
        .iter()
        .map(|r| {
            let j = by_query.get(r.query_id.as_str()).ok_or_else(|| {
                GidxError::validation(format!("no judgment for query {}", r.query_id))
            })?;
            let answers: Vec<String> = j
                .answers
                .iter()
                .map(|a| text::normalize(a))
                .filter(|a| !a.is_empty())
                .collect();
            r.hits
                .iter()
                .map(|h| {
                    if answers.is_empty() {
                        return Ok(j.gold_docs.contains(&h.unit_id));
                    }
                    let t = unit_text(&h.unit_id).ok_or_else(|| {
                        GidxError::validation(format!("no text for retrieved unit {}", h.unit_id))
                    })?;
                    let t = text::normalize(&t);
                    Ok(answers.iter().any(|a| text::contains_normalized(&t, a)))
                })
                .collect()
        })
        .collect()
}

fn index_judgments(judgments: &[Judgment]) -> Result<HashMap<&str, &Judgment>> {
    let mut out = HashMap::with_capacity(judgments.len());
    for j in judgments {
        j.validate()?;
        if out.insert(j.query_id.as_str(), j).is_some() {
            return Err(GidxError::validation(format!(
                "duplicate judgment for {}",
                j.query_id
            )));
        }
    }
    Ok(out)
}

fn check(rel: &[Vec<bool>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(GidxError::validation("k must be >= 1"));
    }
    if rel.is_empty() {
        return Err(GidxError::validation("no queries to evaluate"));
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

fn first_relevant(rel: &[bool], k: usize) -> Option<usize> {
    rel.iter().take(k).position(|&r| r)
}

pub fn top_k_accuracy(rel: &[Vec<bool>], k: usize) -> Result<f64> {
    check(rel, k)?;
    Ok(mean(
        rel.iter()
            .map(|r| f64::from(u8::from(first_relevant(r, k).is_some()))),
        rel.len(),
    ))
}

pub fn mrr_at_k(rel: &[Vec<bool>], k: usize) -> Result<f64> {
    check(rel, k)?;
    Ok(mean(
        rel.iter()
            .map(|r| first_relevant(r, k).map_or(0.0, |i| 1.0 / (i + 1) as f64)),
        rel.len(),
    ))
}

/// Short lists count as padded with irrelevant hits.
pub fn precision_at_k(rel: &[Vec<bool>], k: usize) -> Result<f64> {
    check(rel, k)?;
    Ok(mean(
        rel.iter()
            .map(|r| r.iter().take(k).filter(|&&x| x).count() as f64 / k as f64),
        rel.len(),
    ))
}

/// Mean of `|top-R ∩ gold| / R` with `R = |gold_docs|`, over document-level results.
pub fn r_precision(results: &[RetrievalResult], judgments: &[Judgment]) -> Result<f64> {
    if results.is_empty() {
        return Err(GidxError::validation("no queries to evaluate"));
    }
    let by_query = index_judgments(judgments)?;
    let mut total = 0.0;
    for r in results {
        let j = by_query.get(r.query_id.as_str()).ok_or_else(|| {
            GidxError::validation(format!("no judgment for query {}", r.query_id))
        })?;
        if j.gold_docs.is_empty() {
            return Err(GidxError::validation(format!(
                "R-precision needs gold documents for query {}",
                r.query_id
            )));
        }
        let big_r = j.gold_docs.len();
        let hit = r
            .hits
            .iter()
            .take(big_r)
            .filter(|h| j.gold_docs.contains(&h.unit_id))
            .count();
        total += hit as f64 / big_r as f64;
    }
    Ok(total / results.len() as f64)
}

/// Metrics summary; serializes as
/// `{"top_k": {"1": .., ..}, "mrr@K": .., "p@K": .., "r_precision": .., "num_queries": .., "skipped": ..}`
/// with `K` the largest requested cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub top_k: Vec<f64>,
    pub mrr: f64,
    pub precision: f64,
    pub r_precision: Option<f64>,
    pub num_queries: usize,
    pub skipped: usize,
}

impl MetricsReport {
    pub fn max_k(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(0)
    }
}

struct TopK<'a>(&'a [usize], &'a [f64]);

impl Serialize for TopK<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            map.serialize_entry(&k.to_string(), v)?;
        }
        map.end()
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.max_k();
        let mut map = s.serialize_map(Some(6))?;
        map.serialize_entry("top_k", &TopK(&self.ks, &self.top_k))?;
        map.serialize_entry(&format!("mrr@{k}"), &self.mrr)?;
        map.serialize_entry(&format!("p@{k}"), &self.precision)?;
        map.serialize_entry("r_precision", &self.r_precision)?;
        map.serialize_entry("num_queries", &self.num_queries)?;
        map.serialize_entry("skipped", &self.skipped)?;
        map.end()
    }
}

/// Parse a cutoff list such as `"1,5,20"`: positive, deduplicated, ascending.
pub fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let mut ks = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k: usize = part
            .parse()
            .map_err(|_| GidxError::validation(format!("invalid cutoff {part:?}")))?;
        if k == 0 {
            return Err(GidxError::validation("cutoffs must be >= 1"));
        }
        ks.insert(k);
    }
    if ks.is_empty() {
        return Err(GidxError::validation("no cutoffs given"));
    }
    Ok(ks.into_iter().collect())
}

/// Compute the full report from answer relevance lists and, when available,
/// document-level results for R-precision.
pub fn metrics_report(
    rel: &[Vec<bool>],
    ks: &[usize],
    doc_results: Option<(&[RetrievalResult], &[Judgment])>,
    skipped: usize,
) -> Result<MetricsReport> {
    if ks.is_empty() {
        return Err(GidxError::validation("no cutoffs given"));
    }
    let k = ks.iter().copied().max().unwrap_or(1);
    let top_k = ks
        .iter()
        .map(|&k| top_k_accuracy(rel, k))
        .collect::<Result<Vec<_>>>()?;
    let r_prec = match doc_results {
        Some((res, judg)) if !res.is_empty() => Some(r_precision(res, judg)?),
        _ => None,
    };
    Ok(MetricsReport {
        ks: ks.to_vec(),
        top_k,
        mrr: mrr_at_k(rel, k)?,
        precision: precision_at_k(rel, k)?,
        r_precision: r_prec,
        num_queries: rel.len(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{Granularity, Hit};

    fn rel_at(rank: Option<usize>, len: usize) -> Vec<bool> {
        (1..=len).map(|r| Some(r) == rank).collect()
    }

    fn doc_result(q: &str, ids: &[&str]) -> RetrievalResult {
        RetrievalResult {
            query_id: q.into(),
            granularity: Granularity::Document,
            hits: ids
                .iter()
                .map(|id| Hit {
                    unit_id: (*id).into(),
                    score: 0.0,
                    evidence: 0,
                })
                .collect(),
        }
    }

    fn judgment(q: &str, gold: &[&str]) -> Judgment {
        Judgment {
            query_id: q.into(),
            answers: vec![],
            gold_docs: gold.iter().map(|s| (*s).into()).collect(),
        }
    }

    #[test]
    fn top_k_counts() {
        assert_eq!(top_k_accuracy(&[rel_at(Some(1), 5)], 1).unwrap(), 1.0);
        assert_eq!(top_k_accuracy(&[rel_at(Some(6), 10)], 5).unwrap(), 0.0);
        let rel = [
            rel_at(Some(1), 30),
            rel_at(Some(3), 30),
            rel_at(Some(21), 30),
        ];
        assert_eq!(top_k_accuracy(&rel, 20).unwrap(), 2.0 / 3.0);
        assert!(top_k_accuracy(&rel, 0).is_err());
    }

    #[test]
    fn mrr_values() {
        assert_eq!(mrr_at_k(&[rel_at(Some(3), 5)], 5).unwrap(), 1.0 / 3.0);
        assert_eq!(mrr_at_k(&[rel_at(None, 5)], 5).unwrap(), 0.0);
        assert_eq!(
            mrr_at_k(&[rel_at(Some(1), 5), rel_at(Some(2), 5)], 5).unwrap(),
            0.75
        );
    }

    #[test]
    fn precision_pads_short_lists() {
        assert_eq!(
            precision_at_k(&[vec![true, false, true, false]], 4).unwrap(),
            0.5
        );
        assert_eq!(precision_at_k(&[vec![true; 3]], 3).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[vec![true, false]], 4).unwrap(), 0.25);
    }

    #[test]
    fn r_precision_values() {
        let j = [judgment("a", &["d1"]), judgment("b", &["d1", "d2"])];
        assert_eq!(
            r_precision(&[doc_result("a", &["d1", "d3"])], &j).unwrap(),
            1.0
        );
        assert_eq!(
            r_precision(&[doc_result("b", &["d2", "d5", "d1"])], &j).unwrap(),
            0.5
        );
    }

    #[test]
    fn report_key_order() {
        let report = metrics_report(&[vec![true]], &[1, 5, 20], None, 0).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.starts_with(r#"{"top_k":{"1":1.0,"5":1.0,"20":1.0},"mrr@20":1.0,"p@20":0.05"#));
        assert!(json.ends_with(r#""r_precision":null,"num_queries":1,"skipped":0}"#));
    }

    #[test]
    fn parse_ks_rules() {
        assert_eq!(parse_ks("20,1,5,5").unwrap(), vec![1, 5, 20]);
        assert!(parse_ks("0").is_err());
        assert!(parse_ks("a").is_err());
        assert!(parse_ks("").is_err());
    }
}

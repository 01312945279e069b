//! BM25 over passages, used to mine lexically similar answer-free negatives,
//! plus mining of other passages that contain the gold answer string.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::corpus::Passage;
use crate::error::{GidxError, Result};
use crate::text;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct Bm25Index {
    /// term -> (passage slot, term frequency), slots ascending.
    postings: HashMap<String, Vec<(usize, u32)>>,
    passage_ids: Vec<String>,
    slot_of: HashMap<String, usize>,
    doc_lengths: Vec<u32>,
    /// Normalized passage text, for answer containment checks.
    normalized: Vec<String>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

/// Build with the default `k1 = 1.2`, `b = 0.75`.
pub fn build_bm25(passages: &[Passage]) -> Result<Bm25Index> {
    Bm25Index::with_params(passages, DEFAULT_K1, DEFAULT_B)
}

impl Bm25Index {
    pub fn with_params(passages: &[Passage], k1: f64, b: f64) -> Result<Bm25Index> {
        if passages.is_empty() {
            return Err(GidxError::validation(
                "BM25 index needs at least one passage",
            ));
        }
        if k1.is_nan() || k1 <= 0.0 || !(0.0..=1.0).contains(&b) {
            return Err(GidxError::validation(format!(
                "invalid BM25 parameters k1={k1}, b={b}"
            )));
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut slot_of = HashMap::with_capacity(passages.len());
        let mut doc_lengths = Vec::with_capacity(passages.len());
        let mut normalized = Vec::with_capacity(passages.len());
        for (slot, p) in passages.iter().enumerate() {
            if slot_of.insert(p.passage_id.clone(), slot).is_some() {
                return Err(GidxError::validation(format!(
                    "duplicate passage id {}",
                    p.passage_id
                )));
            }
            let norm = text::normalize(&p.text());
            let mut tf: HashMap<&str, u32> = HashMap::new();
            let mut len = 0u32;
            for t in norm.split(' ').filter(|t| !t.is_empty()) {
                *tf.entry(t).or_default() += 1;
                len += 1;
            }
            for (t, f) in tf {
                postings.entry(t.to_owned()).or_default().push((slot, f));
            }
            doc_lengths.push(len);
            normalized.push(norm);
        }
        let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / passages.len() as f64;
        Ok(Bm25Index {
            postings,
            passage_ids: passages.iter().map(|p| p.passage_id.clone()).collect(),
            slot_of,
            doc_lengths,
            normalized,
            avgdl,
            k1,
            b,
        })
    }

    pub fn num_passages(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, passage_id: &str) -> u32 {
        let Some(&slot) = self.slot_of.get(passage_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|ps| {
                ps.binary_search_by_key(&slot, |&(s, _)| s)
                    .ok()
                    .map(|i| ps[i].1)
            })
            .unwrap_or(0)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, zero for unseen terms.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.doc_freq(term);
        if df == 0 {
            return 0.0;
        }
        idf(self.num_passages(), df)
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - self.b + self.b * len as f64 / self.avgdl;
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    /// BM25 of `query_terms` (already normalized) against one passage.
    pub fn score(&self, query_terms: &[String], passage_id: &str) -> Result<f64> {
        let slot = *self
            .slot_of
            .get(passage_id)
            .ok_or_else(|| GidxError::validation(format!("unknown passage {passage_id}")))?;
        Ok(query_terms
            .iter()
            .map(|t| {
                let tf = self.term_freq(t, passage_id);
                if tf == 0 {
                    0.0
                } else {
                    self.term_weight(self.idf(t), tf, self.doc_lengths[slot])
                }
            })
            .sum())
    }

    /// Scores of every passage with nonzero overlap, accumulated through the postings.
    fn score_all(&self, query_terms: &[String]) -> Vec<(usize, f64)> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for t in query_terms {
            let Some(ps) = self.postings.get(t) else {
                continue;
            };
            let w = idf(self.num_passages(), ps.len());
            for &(slot, tf) in ps {
                *acc.entry(slot).or_default() += self.term_weight(w, tf, self.doc_lengths[slot]);
            }
        }
        acc.into_iter().collect()
    }

    /// Rank passages for `query`, best first; ties by corpus order.
    pub fn rank(&self, query: &str) -> Vec<(String, f64)> {
        let mut scored = self.score_all(&text::terms(query));
        scored.sort_by(rank_order);
        scored
            .into_iter()
            .map(|(slot, s)| (self.passage_ids[slot].clone(), s))
            .collect()
    }

    pub fn passage_contains_any(&self, passage_id: &str, answers: &[String]) -> bool {
        self.slot_of.get(passage_id).is_some_and(|&slot| {
            answers
                .iter()
                .any(|a| text::contains_normalized(&self.normalized[slot], &text::normalize(a)))
        })
    }
}

/// Smoothed BM25 idf; never negative for `1 <= df <= n`.
pub fn idf(n: usize, df: usize) -> f64 {
    (1.0 + (n as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
}

/// Free-function form of [`Bm25Index::score`].
pub fn bm25_score(index: &Bm25Index, query_terms: &[String], passage_id: &str) -> Result<f64> {
    index.score(query_terms, passage_id)
}

/// Top-`n` passages by BM25 against `question` that contain none of `answers`.
///
/// Passages with no term overlap (score 0) are never returned.
pub fn mine_bm25_negatives(
    index: &Bm25Index,
    question: &str,
    answers: &[String],
    n: usize,
) -> Vec<String> {
    index
        .rank(question)
        .into_iter()
        .filter(|(pid, s)| *s > 0.0 && !index.passage_contains_any(pid, answers))
        .take(n)
        .map(|(pid, _)| pid)
        .collect()
}

/// Up to `n` passages other than the gold one whose text contains `answer`, in corpus order.
pub fn mine_same_phrase_negatives(
    passages: &[Passage],
    answer: &str,
    gold_passage_id: &str,
    n: usize,
) -> Vec<String> {
    let needle = text::normalize(answer);
    if needle.is_empty() {
        return Vec::new();
    }
    passages
        .iter()
        .filter(|p| p.passage_id != gold_passage_id)
        .filter(|p| text::contains_normalized(&text::normalize(&p.text()), &needle))
        .take(n)
        .map(|p| p.passage_id.clone())
        .collect()
}

/// Ordering used by [`Bm25Index::rank`], exposed for oracle comparisons.
pub fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

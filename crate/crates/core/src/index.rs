//! Phrase vector index with max-score aggregation to passages and documents.
//!
//! Rows are never dropped when the filter threshold changes; a new threshold
//! produces a new view that shares the vector storage and carries its own
//! active mask. Search only ever sees active rows.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Phrase;
use crate::error::{GidxError, Result};
use crate::matrix::{dot, Matrix};
use crate::quantizer::{Codes, QuantizerModel};

pub const VECTOR_MAGIC: &[u8; 5] = b"GIDX1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Phrase,
    Passage,
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    #[default]
    Exact,
    /// Scores come from the attached quantizer's lookup tables.
    Quantized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub unit_id: String,
    pub score: f32,
    /// Phrase that produced the unit's score (lowest phrase id among ties).
    pub evidence: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub granularity: Granularity,
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn unit_ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.unit_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub num_active: usize,
    pub num_passages: usize,
    pub vec_per_passage: f64,
    pub bytes: u64,
}

#[derive(Debug)]
struct Store {
    vectors: Matrix,
    phrases: Vec<Phrase>,
    row_of_phrase: HashMap<u64, usize>,
    /// Distinct passage ids in first-appearance order.
    passages: Vec<String>,
    rows_of_passage: Vec<Vec<usize>>,
}

#[derive(Debug)]
struct Quantized {
    model: QuantizerModel,
    codes: Codes,
}

#[derive(Debug, Clone)]
pub struct PhraseIndex {
    store: Arc<Store>,
    tau: f32,
    active: Arc<Vec<bool>>,
    quant: Option<Arc<Quantized>>,
}

/// `(score, phrase_id, row)`, ordered best-first.
type Scored = (f32, u64, usize);

fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The best `m` entries in rank order.
fn top_m(scored: &[Scored], m: usize) -> Vec<Scored> {
    let mut v = scored.to_vec();
    if m < v.len() {
        v.select_nth_unstable_by(m, rank_order);
        v.truncate(m);
    }
    v.sort_by(rank_order);
    v
}

/// Build an index over `phrases` and their vectors; rows with `filter_score < tau` are inactive.
pub fn build_index(phrases: Vec<Phrase>, vectors: Matrix, tau: f32) -> Result<PhraseIndex> {
    if vectors.rows() != phrases.len() {
        return Err(GidxError::validation(format!(
            "{} vectors for {} phrases",
            vectors.rows(),
            phrases.len()
        )));
    }
    if vectors.cols() == 0 {
        return Err(GidxError::validation("vector dimension must be positive"));
    }
    let mut row_of_phrase = HashMap::with_capacity(phrases.len());
    let mut passage_slot: HashMap<&str, usize> = HashMap::new();
    let mut passages = Vec::new();
    let mut rows_of_passage: Vec<Vec<usize>> = Vec::new();
    let mut doc_of_passage: HashMap<&str, &str> = HashMap::new();
    for (row, p) in phrases.iter().enumerate() {
        if row_of_phrase.insert(p.phrase_id, row).is_some() {
            return Err(GidxError::validation(format!(
                "duplicate phrase id {}",
                p.phrase_id
            )));
        }
        if let Some(prev) = doc_of_passage.insert(&p.passage_id, &p.doc_id) {
            if prev != p.doc_id {
                return Err(GidxError::validation(format!(
                    "passage {} assigned to documents {prev} and {}",
                    p.passage_id, p.doc_id
                )));
            }
        }
        let slot = *passage_slot.entry(&p.passage_id).or_insert_with(|| {
            passages.push(p.passage_id.clone());
            rows_of_passage.push(Vec::new());
            passages.len() - 1
        });
        rows_of_passage[slot].push(row);
    }
    let active = phrases.iter().map(|p| p.filter_score >= tau).collect();
    Ok(PhraseIndex {
        store: Arc::new(Store {
            vectors,
            phrases,
            row_of_phrase,
            passages,
            rows_of_passage,
        }),
        tau,
        active: Arc::new(active),
        quant: None,
    })
}

impl PhraseIndex {
    pub fn dim(&self) -> usize {
        self.store.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.store.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.phrases.is_empty()
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    pub fn phrases(&self) -> &[Phrase] {
        &self.store.phrases
    }

    pub fn vectors(&self) -> &Matrix {
        &self.store.vectors
    }

    pub fn phrase(&self, row: usize) -> &Phrase {
        &self.store.phrases[row]
    }

    pub fn row_of(&self, phrase_id: u64) -> Option<usize> {
        self.store.row_of_phrase.get(&phrase_id).copied()
    }

    pub fn is_active(&self, row: usize) -> bool {
        self.active[row]
    }

    pub fn active_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Distinct passage ids (active or not), in first-appearance order.
    pub fn passage_ids(&self) -> &[String] {
        &self.store.passages
    }

    /// All rows of the given passage, active or not.
    pub fn passage_rows(&self, passage_id: &str) -> Option<&[usize]> {
        self.store
            .passages
            .iter()
            .position(|p| p == passage_id)
            .map(|i| self.store.rows_of_passage[i].as_slice())
    }

    /// Iterate `(passage_id, rows)` pairs.
    pub fn passages(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.store
            .passages
            .iter()
            .map(String::as_str)
            .zip(self.store.rows_of_passage.iter().map(Vec::as_slice))
    }

    /// A view with a different filter threshold over the same storage.
    pub fn with_tau(&self, tau: f32) -> PhraseIndex {
        let active = self
            .store
            .phrases
            .iter()
            .map(|p| p.filter_score >= tau)
            .collect();
        PhraseIndex {
            store: Arc::clone(&self.store),
            tau,
            active: Arc::new(active),
            quant: self.quant.clone(),
        }
    }

    /// Drop inactive rows permanently.
    pub fn compact(&self) -> Result<PhraseIndex> {
        let keep: Vec<usize> = self.active_rows().collect();
        let phrases = keep
            .iter()
            .map(|&r| self.store.phrases[r].clone())
            .collect();
        let vectors = self.store.vectors.select_rows(&keep);
        let mut out = build_index(phrases, vectors, self.tau)?;
        if let Some(q) = &self.quant {
            let m = q.model.num_subspaces();
            let codes = keep
                .iter()
                .flat_map(|&r| q.codes[r * m..(r + 1) * m].iter().copied())
                .collect();
            out.quant = Some(Arc::new(Quantized {
                model: q.model.clone(),
                codes,
            }));
        }
        Ok(out)
    }

    /// Encode every row (including inactive ones) with `model` and attach it.
    pub fn attach_quantizer(&self, model: QuantizerModel) -> Result<PhraseIndex> {
        if model.dim() != self.dim() {
            return Err(GidxError::validation(format!(
                "quantizer dimension {} does not match index dimension {}",
                model.dim(),
                self.dim()
            )));
        }
        let codes = model.encode_all(&self.store.vectors)?;
        Ok(PhraseIndex {
            quant: Some(Arc::new(Quantized { model, codes })),
            ..self.clone()
        })
    }

    pub fn quantizer(&self) -> Option<&QuantizerModel> {
        self.quant.as_ref().map(|q| &q.model)
    }

    pub fn codes(&self, row: usize) -> Option<&[u16]> {
        self.quant.as_ref().map(|q| {
            let m = q.model.num_subspaces();
            &q.codes[row * m..(row + 1) * m]
        })
    }

    /// `reconstruct(encode(v))` for every row, in row order.
    pub fn reconstructed_vectors(&self) -> Result<Matrix> {
        let q = self
            .quant
            .as_ref()
            .ok_or_else(|| GidxError::State("index has no quantizer attached".into()))?;
        let m = q.model.num_subspaces();
        let mut data = Vec::with_capacity(self.len() * self.dim());
        for codes in q.codes.chunks_exact(m) {
            data.extend(q.model.reconstruct(codes)?);
        }
        Matrix::new(self.len(), self.dim(), data)
    }

    fn check_query(&self, qvec: &[f32], k: usize) -> Result<()> {
        if qvec.len() != self.dim() {
            return Err(GidxError::validation(format!(
                "query has dimension {}, index has {}",
                qvec.len(),
                self.dim()
            )));
        }
        if k == 0 {
            return Err(GidxError::validation("k must be >= 1"));
        }
        Ok(())
    }

    fn score_active(&self, qvec: &[f32], mode: SearchMode) -> Result<Vec<Scored>> {
        let phrases = &self.store.phrases;
        match mode {
            SearchMode::Exact => Ok(self
                .active_rows()
                .map(|r| {
                    let s = dot(self.store.vectors.row(r), qvec) as f32;
                    (s, phrases[r].phrase_id, r)
                })
                .collect()),
            SearchMode::Quantized => {
                let q = self.quant.as_ref().ok_or_else(|| {
                    GidxError::State("quantized search requires an attached quantizer".into())
                })?;
                let table = q.model.adc_table(qvec)?;
                let m = q.model.num_subspaces();
                Ok(self
                    .active_rows()
                    .map(|r| {
                        let s = table.score(&q.codes[r * m..(r + 1) * m]) as f32;
                        (s, phrases[r].phrase_id, r)
                    })
                    .collect())
            }
        }
    }

    /// Top-`k` active phrases by inner product; ties go to the lower phrase id.
    pub fn search_phrases(&self, qvec: &[f32], k: usize, mode: SearchMode) -> Result<Vec<Hit>> {
        self.check_query(qvec, k)?;
        let scored = self.score_active(qvec, mode)?;
        Ok(top_m(&scored, k)
            .into_iter()
            .map(|(score, id, _)| Hit {
                unit_id: id.to_string(),
                score,
                evidence: id,
            })
            .collect())
    }

    /// Top-`k` passages scored by their best active phrase.
    pub fn search_passages(&self, qvec: &[f32], k: usize, mode: SearchMode) -> Result<Vec<Hit>> {
        self.aggregate(qvec, k, mode, |p| &p.passage_id)
    }

    /// Top-`k` documents scored by their best active phrase.
    pub fn search_documents(&self, qvec: &[f32], k: usize, mode: SearchMode) -> Result<Vec<Hit>> {
        self.aggregate(qvec, k, mode, |p| &p.doc_id)
    }

    pub fn search(
        &self,
        query_id: &str,
        qvec: &[f32],
        k: usize,
        granularity: Granularity,
        mode: SearchMode,
    ) -> Result<RetrievalResult> {
        let hits = match granularity {
            Granularity::Phrase => self.search_phrases(qvec, k, mode)?,
            Granularity::Passage => self.search_passages(qvec, k, mode)?,
            Granularity::Document => self.search_documents(qvec, k, mode)?,
        };
        Ok(RetrievalResult {
            query_id: query_id.to_owned(),
            granularity,
            hits,
        })
    }

    /// Retrieve `2k` phrases, keep each unit's first (best) phrase, and double the
    /// candidate count until `k` distinct units are found or every active row was seen.
    fn aggregate(
        &self,
        qvec: &[f32],
        k: usize,
        mode: SearchMode,
        unit: impl Fn(&Phrase) -> &String,
    ) -> Result<Vec<Hit>> {
        self.check_query(qvec, k)?;
        let scored = self.score_active(qvec, mode)?;
        let mut want = k.saturating_mul(2);
        loop {
            let candidates = top_m(&scored, want);
            let mut seen = HashSet::new();
            let mut hits = Vec::with_capacity(k);
            for (score, id, row) in &candidates {
                let u = unit(&self.store.phrases[*row]);
                if seen.insert(u.as_str()) {
                    hits.push(Hit {
                        unit_id: u.clone(),
                        score: *score,
                        evidence: *id,
                    });
                    if hits.len() == k {
                        break;
                    }
                }
            }
            if hits.len() == k || candidates.len() >= scored.len() {
                return Ok(hits);
            }
            want = want.saturating_mul(2);
        }
    }

    /// Active-vector count, vectors per passage, and storage bytes.
    ///
    /// Vectors per passage divides by every passage known to the index, so
    /// raising the threshold can only lower it.
    pub fn stats(&self) -> IndexStats {
        let num_active = self.num_active();
        let num_passages = self.store.passages.len();
        let vec_per_passage = if num_passages == 0 {
            0.0
        } else {
            num_active as f64 / num_passages as f64
        };
        let bytes = match &self.quant {
            Some(q) => q.model.memory_footprint(num_active),
            None => (num_active * self.dim() * 4) as u64,
        };
        IndexStats {
            num_active,
            num_passages,
            vec_per_passage,
            bytes,
        }
    }
}

/// Free-function alias for [`PhraseIndex::stats`].
pub fn index_stats(index: &PhraseIndex) -> IndexStats {
    index.stats()
}

/// Write `GIDX1`, `u32` dim, `u64` count, then row-major little-endian `f32`.
pub fn write_vectors<W: Write>(mut w: W, vectors: &Matrix) -> Result<()> {
    let fmt = |e: std::io::Error| GidxError::Format(format!("writing vectors: {e}"));
    let dim = u32::try_from(vectors.cols())
        .map_err(|_| GidxError::validation("dimension does not fit in u32"))?;
    w.write_all(VECTOR_MAGIC).map_err(fmt)?;
    w.write_all(&dim.to_le_bytes()).map_err(fmt)?;
    w.write_all(&(vectors.rows() as u64).to_le_bytes())
        .map_err(fmt)?;
    let mut buf = Vec::with_capacity(vectors.as_slice().len() * 4);
    for x in vectors.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(fmt)
}

pub fn vectors_to_bytes(vectors: &Matrix) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(17 + vectors.as_slice().len() * 4);
    write_vectors(&mut buf, vectors)?;
    Ok(buf)
}

pub fn read_vectors<R: Read>(mut r: R) -> Result<Matrix> {
    let fmt = |e: std::io::Error| GidxError::Format(format!("reading vectors: {e}"));
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(fmt)?;
    if &magic != VECTOR_MAGIC {
        return Err(GidxError::Format("bad vector file magic".into()));
    }
    let mut dim = [0u8; 4];
    r.read_exact(&mut dim).map_err(fmt)?;
    let mut count = [0u8; 8];
    r.read_exact(&mut count).map_err(fmt)?;
    let dim = u32::from_le_bytes(dim) as usize;
    let count = usize::try_from(u64::from_le_bytes(count))
        .map_err(|_| GidxError::Format("row count too large".into()))?;
    let len = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| GidxError::Format("vector block size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(fmt)?;
    if bytes.len() != len {
        return Err(GidxError::Format(format!(
            "expected {len} bytes of vector data, found {}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Matrix::new(count, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phrase(id: u64, passage: &str, doc: &str, filter: f32) -> Phrase {
        Phrase {
            phrase_id: id,
            passage_id: passage.into(),
            doc_id: doc.into(),
            span: (0, 0),
            surface: format!("p{id}"),
            filter_score: filter,
        }
    }

    fn index_1d(scores: &[(u64, &str, &str, f32)]) -> PhraseIndex {
        let phrases = scores
            .iter()
            .map(|&(id, p, d, _)| phrase(id, p, d, 1.0))
            .collect();
        let vectors = Matrix::new(scores.len(), 1, scores.iter().map(|s| s.3).collect()).unwrap();
        build_index(phrases, vectors, 0.0).unwrap()
    }

    #[test]
    fn threshold_controls_active_rows() {
        let phrases = vec![phrase(0, "a", "d", 0.4), phrase(1, "a", "d", 0.6)];
        let v = Matrix::zeros(2, 2);
        let idx = build_index(phrases, v, 0.5).unwrap();
        assert_eq!(idx.num_active(), 1);
        assert!(!idx.is_active(0));
        assert_eq!(idx.with_tau(0.0).num_active(), 2);
        let hits = idx
            .search_phrases(&[1.0, 0.0], 5, SearchMode::Exact)
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].evidence, 1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = build_index(vec![phrase(0, "a", "d", 1.0)], Matrix::zeros(2, 3), 0.0);
        assert!(err.is_err());
        let idx = build_index(vec![phrase(0, "a", "d", 1.0)], Matrix::zeros(1, 3), 0.0).unwrap();
        assert!(idx.search_phrases(&[1.0], 1, SearchMode::Exact).is_err());
        assert!(idx
            .search_phrases(&[1.0, 0.0, 0.0], 0, SearchMode::Exact)
            .is_err());
        assert!(idx
            .search_phrases(&[1.0, 0.0, 0.0], 1, SearchMode::Quantized)
            .is_err());
    }

    #[test]
    fn duplicate_phrase_ids_are_rejected() {
        let phrases = vec![phrase(3, "a", "d", 1.0), phrase(3, "b", "d", 1.0)];
        assert!(build_index(phrases, Matrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn single_phrase_returns_dot_product() {
        let phrases = vec![phrase(0, "a", "d", 1.0)];
        let idx = build_index(phrases, Matrix::new(1, 2, vec![0.5, 2.0]).unwrap(), 0.0).unwrap();
        let hits = idx
            .search_phrases(&[2.0, 1.0], 3, SearchMode::Exact)
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].score, 3.0);
    }

    #[test]
    fn orthonormal_lookup() {
        let phrases = vec![phrase(1, "a", "d", 1.0), phrase(2, "b", "d", 1.0)];
        let idx = build_index(
            phrases,
            Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            0.0,
        )
        .unwrap();
        let hits = idx
            .search_phrases(&[0.0, 1.0], 1, SearchMode::Exact)
            .unwrap();
        assert_eq!(hits[0].unit_id, "2");
        assert_eq!(hits[0].score, 1.0);
    }

    #[test]
    fn ties_break_on_lower_phrase_id() {
        let idx = index_1d(&[(9, "a", "d", 1.0), (4, "b", "d", 1.0), (7, "a", "d", 1.0)]);
        let hits = idx.search_phrases(&[1.0], 3, SearchMode::Exact).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.evidence).collect();
        assert_eq!(ids, vec![4, 7, 9]);
        let passages = idx.search_passages(&[1.0], 2, SearchMode::Exact).unwrap();
        assert_eq!(passages[0].unit_id, "b");
        assert_eq!(passages[1].evidence, 7);
    }

    #[test]
    fn passage_score_is_max_phrase_score() {
        let idx = index_1d(&[
            (0, "p1", "d1", 0.9),
            (1, "p1", "d1", 0.1),
            (2, "p2", "d2", 0.8),
            (3, "p2", "d2", 0.7),
        ]);
        let hits = idx.search_passages(&[1.0], 2, SearchMode::Exact).unwrap();
        let got: Vec<_> = hits.iter().map(|h| (h.unit_id.as_str(), h.score)).collect();
        assert_eq!(got, vec![("p1", 0.9), ("p2", 0.8)]);
    }

    #[test]
    fn exhausted_index_returns_fewer_units() {
        let idx = index_1d(&[(0, "p", "d", 0.3), (1, "p", "d", 0.2), (2, "p", "d", 0.1)]);
        assert_eq!(
            idx.search_passages(&[1.0], 3, SearchMode::Exact)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            idx.search_documents(&[1.0], 7, SearchMode::Exact)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn documents_rank_by_their_best_phrase() {
        let idx = index_1d(&[
            (0, "a#0", "a", 0.2),
            (1, "a#1", "a", 0.5),
            (2, "b#0", "b", 0.4),
        ]);
        let hits = idx.search_documents(&[1.0], 2, SearchMode::Exact).unwrap();
        let got: Vec<_> = hits.iter().map(|h| (h.unit_id.as_str(), h.score)).collect();
        assert_eq!(got, vec![("a", 0.5), ("b", 0.4)]);
    }

    #[test]
    fn stats_counts() {
        let phrases: Vec<_> = (0..10)
            .map(|i| phrase(i, if i < 5 { "a" } else { "b" }, "d", 1.0))
            .collect();
        let idx = build_index(phrases, Matrix::zeros(10, 4), 0.0).unwrap();
        let s = index_stats(&idx);
        assert_eq!(s.vec_per_passage, 5.0);
        assert_eq!(s.bytes, 10 * 4 * 4);

        let phrases: Vec<_> = (0..100).map(|i| phrase(i, "p", "d", 1.0)).collect();
        let idx = build_index(phrases, Matrix::zeros(100, 32), 0.0).unwrap();
        assert_eq!(idx.stats().bytes, 12_800);
    }

    #[test]
    fn compact_keeps_active_rows_only() {
        let phrases = vec![
            phrase(0, "a", "d", 0.1),
            phrase(1, "a", "d", 0.9),
            phrase(2, "b", "d", 0.8),
        ];
        let v = Matrix::new(3, 1, vec![5.0, 1.0, 2.0]).unwrap();
        let idx = build_index(phrases, v, 0.5).unwrap();
        let c = idx.compact().unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(
            c.search_phrases(&[1.0], 5, SearchMode::Exact).unwrap(),
            idx.search_phrases(&[1.0], 5, SearchMode::Exact).unwrap()
        );
    }

    #[test]
    fn vector_file_layout() {
        let m = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -6.5]).unwrap();
        let bytes = vectors_to_bytes(&m).unwrap();
        assert_eq!(&bytes[..5], b"GIDX1");
        assert_eq!(&bytes[5..9], &3u32.to_le_bytes());
        assert_eq!(&bytes[9..17], &2u64.to_le_bytes());
        assert_eq!(&bytes[17..21], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 17 + 24);
        assert_eq!(read_vectors(bytes.as_slice()).unwrap(), m);
        assert!(read_vectors(&bytes[..30]).is_err());
    }

    #[test]
    fn concurrent_searches_agree() {
        let rows: Vec<(u64, String, String, f32)> = (0..200)
            .map(|i| {
                (
                    i,
                    format!("p{}", i % 17),
                    format!("d{}", (i % 17) % 5),
                    ((i * 37) % 101) as f32,
                )
            })
            .collect();
        let phrases = rows.iter().map(|r| phrase(r.0, &r.1, &r.2, 1.0)).collect();
        let v = Matrix::new(200, 1, rows.iter().map(|r| r.3).collect()).unwrap();
        let idx = build_index(phrases, v, 0.0).unwrap();
        let expected = idx.search_passages(&[1.0], 10, SearchMode::Exact).unwrap();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    assert_eq!(
                        idx.search_passages(&[1.0], 10, SearchMode::Exact).unwrap(),
                        expected
                    );
                });
            }
        });
    }
}

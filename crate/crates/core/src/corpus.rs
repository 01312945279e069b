//! Documents, fixed-size passages, enumerated phrase spans, and a
//! deterministic hashing featurizer that stands in for learned encoders.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GidxError, Result};
use crate::jsonl;
use crate::matrix::Matrix;

/// Default passage size in words.
pub const DEFAULT_BLOCK_WORDS: usize = 100;
/// Default maximum phrase length in words.
pub const DEFAULT_MAX_PHRASE_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub passage_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub word_tokens: Vec<String>,
    /// Character (not byte) offset of the first word in the parent document.
    pub char_offset: usize,
}

impl Passage {
    pub fn text(&self) -> String {
        self.word_tokens.join(" ")
    }

    pub fn len(&self) -> usize {
        self.word_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_tokens.is_empty()
    }
}

/// A contiguous word span inside one passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phrase {
    pub phrase_id: u64,
    pub passage_id: String,
    pub doc_id: String,
    /// Inclusive word indices within the passage.
    pub span: (usize, usize),
    pub surface: String,
    #[serde(default = "default_filter_score")]
    pub filter_score: f32,
}

fn default_filter_score() -> f32 {
    1.0
}

impl Phrase {
    pub fn word_len(&self) -> usize {
        self.span.1 - self.span.0 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub ngram_range: (usize, usize),
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 64,
            ngram_range: (3, 5),
            seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(GidxError::validation(format!(
                "featurizer dim must be >= 8, got {}",
                self.dim
            )));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(GidxError::validation(format!(
                "invalid n-gram range ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Loaded documents plus (after [`Corpus::segment`]) their passages.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub passages: Vec<Passage>,
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

/// Load a JSONL corpus, one `{"id", "title", "text"}` object per line.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let raw: Vec<RawDocument> = jsonl::read(path)?;
    let docs = raw
        .into_iter()
        .map(|r| Document {
            doc_id: r.id,
            title: r.title,
            text: r.text,
            passage_ids: Vec::new(),
        })
        .collect();
    Corpus::from_documents(docs)
}

impl Corpus {
    pub fn from_documents(documents: Vec<Document>) -> Result<Corpus> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(GidxError::validation(format!(
                    "duplicate document id {:?}",
                    d.doc_id
                )));
            }
        }
        Ok(Corpus {
            documents,
            passages: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Split every document into passages of `block_words`, replacing any previous segmentation.
    pub fn segment(&mut self, block_words: usize) -> Result<()> {
        let mut passages = Vec::new();
        for doc in &mut self.documents {
            let parts = segment_document(doc, block_words)?;
            doc.passage_ids = parts.iter().map(|p| p.passage_id.clone()).collect();
            passages.extend(parts);
        }
        self.passages = passages;
        Ok(())
    }

    /// Enumerate phrases of every passage with globally sequential ids starting at 0.
    pub fn enumerate_phrases(&self, max_len: usize) -> Result<Vec<Phrase>> {
        let mut out = Vec::new();
        for p in &self.passages {
            let next = out.len() as u64;
            out.extend(enumerate_phrases(p, max_len, next)?);
        }
        Ok(out)
    }

    pub fn passage(&self, passage_id: &str) -> Option<&Passage> {
        self.passages.iter().find(|p| p.passage_id == passage_id)
    }

    /// One row per phrase, embedded from the words of its passage.
    pub fn embed_phrases(&self, phrases: &[Phrase], encoder: &dyn PhraseEncoder) -> Result<Matrix> {
        let by_id: HashMap<&str, &Passage> = self
            .passages
            .iter()
            .map(|p| (p.passage_id.as_str(), p))
            .collect();
        let mut data = Vec::with_capacity(phrases.len() * encoder.dim());
        for ph in phrases {
            let passage = by_id.get(ph.passage_id.as_str()).ok_or_else(|| {
                GidxError::validation(format!(
                    "phrase {} refers to unknown passage {}",
                    ph.phrase_id, ph.passage_id
                ))
            })?;
            data.extend(encoder.encode_span(&passage.word_tokens, ph.span));
        }
        Matrix::new(phrases.len(), encoder.dim(), data)
    }
}

/// Split a document into consecutive blocks of `block_words` words; the last block may be shorter.
pub fn segment_document(doc: &Document, block_words: usize) -> Result<Vec<Passage>> {
    if block_words == 0 {
        return Err(GidxError::validation("block_words must be >= 1"));
    }
    let spans = word_char_offsets(&doc.text);
    let passages = spans
        .chunks(block_words)
        .enumerate()
        .map(|(i, chunk)| Passage {
            passage_id: format!("{}#{}", doc.doc_id, i),
            doc_id: doc.doc_id.clone(),
            word_tokens: chunk.iter().map(|(_, w)| (*w).to_owned()).collect(),
            char_offset: chunk[0].0,
        })
        .collect();
    Ok(passages)
}

/// Whitespace-separated words paired with their character offsets.
fn word_char_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None; // (char offset, byte offset)
    for (char_idx, (byte_idx, c)) in text.char_indices().enumerate() {
        if c.is_whitespace() {
            if let Some((cs, bs)) = start.take() {
                out.push((cs, &text[bs..byte_idx]));
            }
        } else if start.is_none() {
            start = Some((char_idx, byte_idx));
        }
    }
    if let Some((cs, bs)) = start {
        out.push((cs, &text[bs..]));
    }
    out
}

/// All spans of 1..=`max_len` words in `(start, length)` order, ids assigned from `first_id`.
pub fn enumerate_phrases(passage: &Passage, max_len: usize, first_id: u64) -> Result<Vec<Phrase>> {
    if max_len == 0 {
        return Err(GidxError::validation("max phrase length must be >= 1"));
    }
    let n = passage.word_tokens.len();
    let mut out = Vec::with_capacity(phrase_count(n, max_len));
    let mut id = first_id;
    for start in 0..n {
        for len in 1..=max_len.min(n - start) {
            let end = start + len - 1;
            out.push(Phrase {
                phrase_id: id,
                passage_id: passage.passage_id.clone(),
                doc_id: passage.doc_id.clone(),
                span: (start, end),
                surface: passage.word_tokens[start..=end].join(" "),
                filter_score: 1.0,
            });
            id += 1;
        }
    }
    Ok(out)
}

/// Number of spans of length `1..=max_len` in an `n`-word passage.
pub fn phrase_count(n: usize, max_len: usize) -> usize {
    let l = max_len.min(n);
    n * l - l * l.saturating_sub(1) / 2
}

/// One line of the phrase filter-score sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterScoreRow {
    pub passage_id: String,
    pub span: (usize, usize),
    pub filter_score: f32,
}

/// Overwrite `filter_score` on phrases listed in the sidecar file. Unlisted phrases keep theirs.
pub fn apply_filter_scores(phrases: &mut [Phrase], rows: &[FilterScoreRow]) -> Result<usize> {
    let mut lookup: HashMap<(&str, (usize, usize)), f32> = HashMap::new();
    for r in rows {
        if !(0.0..=1.0).contains(&r.filter_score) {
            return Err(GidxError::validation(format!(
                "filter score {} for {} {:?} is outside [0, 1]",
                r.filter_score, r.passage_id, r.span
            )));
        }
        lookup.insert((r.passage_id.as_str(), r.span), r.filter_score);
    }
    let mut applied = 0;
    for p in phrases.iter_mut() {
        if let Some(&s) = lookup.get(&(p.passage_id.as_str(), p.span)) {
            p.filter_score = s;
            applied += 1;
        }
    }
    Ok(applied)
}

/// Hash character n-grams of the lowercased text into `dim` signed buckets, then L2-normalize.
///
/// Empty (or all-whitespace) text yields the zero vector.
pub fn featurize(text: &str, cfg: &FeaturizerConfig) -> Vec<f32> {
    let mut acc = vec![0.0f64; cfg.dim];
    let normalized: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if normalized.is_empty() {
        return vec![0.0; cfg.dim];
    }
    let padded: Vec<char> = format!(" {} ", normalized.join(" ")).chars().collect();
    let (lo, hi) = cfg.ngram_range;
    let mut buf = [0u8; 4];
    for n in lo..=hi {
        if n > padded.len() {
            break;
        }
        for window in padded.windows(n) {
            let mut h = seeded_fnv(cfg.seed, n as u64);
            for c in window {
                for b in c.encode_utf8(&mut buf).bytes() {
                    h = fnv_step(h, b);
                }
            }
            let h = mix64(h);
            let bucket = (h % cfg.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; cfg.dim];
    }
    acc.iter().map(|x| (x / norm) as f32).collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn seeded_fnv(seed: u64, salt: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().into_iter().chain(salt.to_le_bytes()) {
        h = fnv_step(h, b);
    }
    h
}

fn fnv_step(h: u64, b: u8) -> u64 {
    (h ^ b as u64).wrapping_mul(FNV_PRIME)
}

// splitmix64 finalizer; FNV alone has weak low bits.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a phrase span of a (possibly synthetic) passage to a vector.
///
/// Diagnostics that build new passages on the fly must embed them with the
/// same pipeline that produced the index.
pub trait PhraseEncoder {
    fn dim(&self) -> usize;
    fn encode_span(&self, words: &[String], span: (usize, usize)) -> Vec<f32>;
}

/// [`PhraseEncoder`] backed by [`featurize`] on the span surface.
#[derive(Debug, Clone, Copy)]
pub struct HashingFeaturizer(pub FeaturizerConfig);

impl PhraseEncoder for HashingFeaturizer {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn encode_span(&self, words: &[String], span: (usize, usize)) -> Vec<f32> {
        featurize(&words[span.0..=span.1].join(" "), &self.0)
    }
}

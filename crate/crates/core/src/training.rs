//! Contrastive losses, negative construction, topical/hard diagnostics, and
//! document-supervised query-side fine-tuning of a linear query encoder.
//!
//! Phrase vectors are frozen; the only parameters are the encoder weights.
//! Scores are `f(s, q) = <v_s, W x>` with `x` the query features.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{enumerate_phrases, Passage, PhraseEncoder};
use crate::error::{GidxError, Result};
use crate::index::PhraseIndex;
use crate::lexical::{mine_bm25_negatives, mine_same_phrase_negatives, Bm25Index};
use crate::matrix::{dot_mixed, Matrix};
use crate::text;

/// Default size of the retrieved set used by the document-level loss.
pub const DEFAULT_TOP_K: usize = 100;

/// Linear map from query features to index space, `dim_out x dim_in` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEncoder {
    pub dim_in: usize,
    pub dim_out: usize,
    pub weight: Vec<f64>,
}

impl QueryEncoder {
    pub fn new(dim_in: usize, dim_out: usize, weight: Vec<f64>) -> Result<Self> {
        let enc = QueryEncoder {
            dim_in,
            dim_out,
            weight,
        };
        enc.validate()?;
        Ok(enc)
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        QueryEncoder {
            dim_in: dim,
            dim_out: dim,
            weight,
        }
    }

    pub fn zeros(dim_in: usize, dim_out: usize) -> Self {
        QueryEncoder {
            dim_in,
            dim_out,
            weight: vec![0.0; dim_in * dim_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_in == 0 || self.dim_out == 0 || self.weight.len() != self.dim_in * self.dim_out
        {
            return Err(GidxError::validation(format!(
                "encoder weight has {} entries for a {}x{} map",
                self.weight.len(),
                self.dim_out,
                self.dim_in
            )));
        }
        if self.weight.iter().any(|w| !w.is_finite()) {
            return Err(GidxError::validation(
                "encoder weight has non-finite entries",
            ));
        }
        Ok(())
    }

    pub fn encode(&self, features: &[f32]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.dim_in)
            .map(|row| dot_mixed(features, row))
            .collect()
    }

    pub fn encode_f32(&self, features: &[f32]) -> Vec<f32> {
        self.encode(features)
            .into_iter()
            .map(|x| x as f32)
            .collect()
    }

    fn check_features(&self, features: &[f32]) -> Result<()> {
        if features.len() != self.dim_in {
            return Err(GidxError::validation(format!(
                "query features have dimension {}, encoder expects {}",
                features.len(),
                self.dim_in
            )));
        }
        Ok(())
    }

    fn check_index(&self, index: &PhraseIndex) -> Result<()> {
        if index.dim() != self.dim_out {
            return Err(GidxError::validation(format!(
                "encoder output dimension {} does not match index dimension {}",
                self.dim_out,
                index.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScheme {
    InBatch,
    Bm25Hard,
    InPassage,
    SamePhrase,
}

impl NegativeScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "in_batch" => Ok(NegativeScheme::InBatch),
            "bm25_hard" | "bm25" => Ok(NegativeScheme::Bm25Hard),
            "in_passage" => Ok(NegativeScheme::InPassage),
            "same_phrase" => Ok(NegativeScheme::SamePhrase),
            other => Err(GidxError::validation(format!(
                "unknown negative scheme {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NegativeScheme::InBatch => "in_batch",
            NegativeScheme::Bm25Hard => "bm25_hard",
            NegativeScheme::InPassage => "in_passage",
            NegativeScheme::SamePhrase => "same_phrase",
        }
    }
}

/// One line of the training-data JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub query: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default)]
    pub gold_passage_id: Option<String>,
    #[serde(default)]
    pub gold_docs: Vec<String>,
    /// scheme name -> mined passage ids
    #[serde(default)]
    pub negatives: BTreeMap<String, Vec<String>>,
}

/// A query with its features and supervision, ready for training or diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query_id: String,
    pub query_text: String,
    pub features: Vec<f32>,
    /// Positive phrase `x⁺`, when one could be located.
    pub positive: Option<u64>,
    pub gold_passage_id: Option<String>,
    /// Gold documents `D*`.
    pub gold_docs: BTreeSet<String>,
    /// Mined negative passage ids per scheme.
    pub negatives: BTreeMap<NegativeScheme, Vec<String>>,
    pub answers: Vec<String>,
}

impl TrainingExample {
    /// Attach features and locate the positive phrase: the lowest-id phrase of the
    /// gold passage whose normalized surface equals a normalized answer.
    pub fn from_record(
        query_id: String,
        record: &TrainingRecord,
        features: Vec<f32>,
        index: &PhraseIndex,
    ) -> Result<Self> {
        let mut negatives = BTreeMap::new();
        for (k, v) in &record.negatives {
            negatives.insert(NegativeScheme::parse(k)?, v.clone());
        }
        let positive = record
            .gold_passage_id
            .as_deref()
            .and_then(|pid| find_answer_phrase(index, pid, &record.answers));
        Ok(TrainingExample {
            query_id,
            query_text: record.query.clone(),
            features,
            positive,
            gold_passage_id: record.gold_passage_id.clone(),
            gold_docs: record.gold_docs.iter().cloned().collect(),
            negatives,
            answers: record.answers.clone(),
        })
    }
}

fn find_answer_phrase(index: &PhraseIndex, passage_id: &str, answers: &[String]) -> Option<u64> {
    let normalized: Vec<String> = answers.iter().map(|a| text::normalize(a)).collect();
    index
        .passage_rows(passage_id)?
        .iter()
        .map(|&r| index.phrase(r))
        .filter(|p| normalized.contains(&text::normalize(&p.surface)))
        .map(|p| p.phrase_id)
        .min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Mini-batch size; `None` means full-batch descent.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Size of the retrieved phrase set for the document-level loss.
    pub top_k: usize,
    pub quantization_aware: bool,
    pub negative_schemes: BTreeSet<NegativeScheme>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: None,
            learning_rate: 0.1,
            epochs: 10,
            seed: 0,
            top_k: DEFAULT_TOP_K,
            quantization_aware: false,
            negative_schemes: [NegativeScheme::InBatch].into_iter().collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(GidxError::validation("top_k must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(GidxError::validation(
                "learning rate must be finite and >= 0",
            ));
        }
        match self.batch_size {
            Some(0) => return Err(GidxError::validation("batch size must be >= 1")),
            Some(1) if self.negative_schemes.contains(&NegativeScheme::InBatch) => {
                return Err(GidxError::validation(
                    "in-batch negatives need a batch size of at least 2",
                ))
            }
            _ => {}
        }
        Ok(())
    }

    fn batches(&self, n: usize, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);
        let size = self.batch_size.unwrap_or(n).max(1);
        let mut batches: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
        // a trailing singleton cannot form in-batch negatives; fold it into the previous batch
        if batches.len() > 1
            && batches.last().is_some_and(|b| b.len() == 1)
            && self.negative_schemes.contains(&NegativeScheme::InBatch)
        {
            let last = batches.pop().unwrap_or_default();
            if let Some(prev) = batches.last_mut() {
                prev.extend(last);
            }
        }
        batches
    }
}

// ---------------------------------------------------------------------------
// losses

/// `-log(e^pos / (e^pos + Σ e^neg))`, evaluated without overflow or cancellation.
pub fn nll_loss(pos: f64, negs: &[f64]) -> f64 {
    if negs.is_empty() {
        return 0.0;
    }
    let max_neg = negs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if pos >= max_neg {
        let tail: f64 = negs.iter().map(|n| (n - pos).exp()).sum();
        tail.ln_1p()
    } else {
        // loss = (max_neg - pos) + ln(e^(pos-max_neg) + Σ e^(neg-max_neg)), first term > 0
        let mut rest = (pos - max_neg).exp();
        let mut skipped_max = false;
        for &n in negs {
            if !skipped_max && n == max_neg {
                skipped_max = true;
                continue;
            }
            rest += (n - max_neg).exp();
        }
        (max_neg - pos) + rest.ln_1p()
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Phrase vectors used for scoring during training: raw, or quantizer reconstructions.
fn scoring_vectors(index: &PhraseIndex, quantization_aware: bool) -> Result<Cow<'_, Matrix>> {
    if quantization_aware {
        if index.quantizer().is_none() {
            return Err(GidxError::validation(
                "quantization-aware training requires an index with an attached quantizer",
            ));
        }
        Ok(Cow::Owned(index.reconstructed_vectors()?))
    } else {
        Ok(Cow::Borrowed(index.vectors()))
    }
}

/// Top-`k` active rows by `<v, q>` (`f64`), ties to lower phrase id.
fn retrieve(index: &PhraseIndex, vectors: &Matrix, q: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut scored: Vec<(f64, u64, usize)> = index
        .active_rows()
        .map(|r| (dot_mixed(vectors.row(r), q), index.phrase(r).phrase_id, r))
        .collect();
    let order =
        |a: &(f64, u64, usize), b: &(f64, u64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    scored.into_iter().map(|(s, _, r)| (s, r)).collect()
}

/// Document-level loss and its gradient with respect to `q`, or `None` when no
/// retrieved phrase comes from a gold document.
fn ldoc_and_query_grad(
    index: &PhraseIndex,
    vectors: &Matrix,
    q: &[f64],
    gold_docs: &BTreeSet<String>,
    top_k: usize,
) -> Option<(f64, Vec<f64>)> {
    let retrieved = retrieve(index, vectors, q, top_k);
    let is_gold: Vec<bool> = retrieved
        .iter()
        .map(|&(_, r)| gold_docs.contains(&index.phrase(r).doc_id))
        .collect();
    if !is_gold.iter().any(|&g| g) {
        return None;
    }
    let all = retrieved.iter().map(|&(s, _)| s);
    let gold = retrieved
        .iter()
        .zip(&is_gold)
        .filter(|(_, &g)| g)
        .map(|(&(s, _), _)| s);
    let lse_all = log_sum_exp(all);
    let lse_gold = log_sum_exp(gold);
    let loss = lse_all - lse_gold;

    let mut grad = vec![0.0; q.len()];
    for (&(s, r), &g) in retrieved.iter().zip(&is_gold) {
        let p_all = (s - lse_all).exp();
        let p_gold = if g { (s - lse_gold).exp() } else { 0.0 };
        let w = p_all - p_gold;
        if w != 0.0 {
            for (gi, v) in grad.iter_mut().zip(vectors.row(r)) {
                *gi += w * *v as f64;
            }
        }
    }
    Some((loss, grad))
}

fn outer_into(acc: &mut [f64], grad_q: &[f64], features: &[f32], scale: f64) {
    let dim_in = features.len();
    for (i, gq) in grad_q.iter().enumerate() {
        let row = &mut acc[i * dim_in..(i + 1) * dim_in];
        for (a, x) in row.iter_mut().zip(features) {
            *a += scale * gq * *x as f64;
        }
    }
}

/// Document-supervised loss over the top-`k` retrieved phrases, using raw phrase vectors.
///
/// Returns `Ok(None)` (a skipped example) when no retrieved phrase is from `gold_docs`.
pub fn ldoc_loss(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    features: &[f32],
    gold_docs: &BTreeSet<String>,
    top_k: usize,
) -> Result<Option<f64>> {
    Ok(ldoc_loss_and_grad(encoder, index, features, gold_docs, top_k, false)?.map(|(l, _)| l))
}

/// Loss and gradient with respect to the encoder weights (row-major, same layout as `weight`).
pub fn ldoc_loss_and_grad(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    features: &[f32],
    gold_docs: &BTreeSet<String>,
    top_k: usize,
    quantization_aware: bool,
) -> Result<Option<(f64, Vec<f64>)>> {
    if top_k == 0 {
        return Err(GidxError::validation("top_k must be >= 1"));
    }
    if index.num_active() == 0 {
        return Err(GidxError::validation("index has no active phrases"));
    }
    encoder.check_features(features)?;
    encoder.check_index(index)?;
    let vectors = scoring_vectors(index, quantization_aware)?;
    let q = encoder.encode(features);
    Ok(
        ldoc_and_query_grad(index, &vectors, &q, gold_docs, top_k).map(|(loss, gq)| {
            let mut grad = vec![0.0; encoder.weight.len()];
            outer_into(&mut grad, &gq, features, 1.0);
            (loss, grad)
        }),
    )
}

/// Score that training assigns to row `row` for the encoded query.
pub fn training_score(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    features: &[f32],
    row: usize,
    quantization_aware: bool,
) -> Result<f64> {
    let vectors = scoring_vectors(index, quantization_aware)?;
    Ok(dot_mixed(vectors.row(row), &encoder.encode(features)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinetuneReport {
    #[serde(skip)]
    pub encoder: QueryEncoder,
    /// Mean loss of the usable examples, per epoch.
    pub loss_history: Vec<f64>,
    /// Examples skipped (no gold document retrieved), per epoch.
    pub skipped: Vec<usize>,
}

/// Gradient descent on the mean document-level loss, re-retrieving the top-`k`
/// set with the current weights at every step.
pub fn query_side_finetune(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    data: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<FinetuneReport> {
    cfg.validate()?;
    encoder.validate()?;
    encoder.check_index(index)?;
    for ex in data {
        encoder.check_features(&ex.features)?;
    }
    let vectors = scoring_vectors(index, cfg.quantization_aware)?;
    let mut enc = encoder.clone();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut skipped_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut used = 0usize;
        let mut skipped = 0usize;
        for batch in cfg.batches(data.len(), epoch) {
            let mut grad = vec![0.0; enc.weight.len()];
            let mut batch_used = 0usize;
            for &i in &batch {
                let ex = &data[i];
                let q = enc.encode(&ex.features);
                match ldoc_and_query_grad(index, &vectors, &q, &ex.gold_docs, cfg.top_k) {
                    Some((loss, gq)) => {
                        total += loss;
                        used += 1;
                        batch_used += 1;
                        outer_into(&mut grad, &gq, &ex.features, 1.0);
                    }
                    None => skipped += 1,
                }
            }
            if batch_used > 0 {
                let step = cfg.learning_rate / batch_used as f64;
                for (w, g) in enc.weight.iter_mut().zip(&grad) {
                    *w -= step * g;
                }
            }
        }
        if used == 0 {
            return Err(GidxError::validation(format!(
                "no usable training examples in epoch {epoch}: no gold document in any top-{} set",
                cfg.top_k
            )));
        }
        loss_history.push(total / used as f64);
        skipped_history.push(skipped);
    }
    enc.validate()?;
    Ok(FinetuneReport {
        encoder: enc,
        loss_history,
        skipped: skipped_history,
    })
}

// ---------------------------------------------------------------------------
// negatives and phrase-level contrastive training

/// Resources for mining negatives that an example does not already carry.
#[derive(Clone, Copy, Default)]
pub struct NegativeSources<'a> {
    pub bm25: Option<&'a Bm25Index>,
    pub passages: Option<&'a [Passage]>,
}

fn phrases_of_passages(index: &PhraseIndex, passage_ids: &[String]) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for pid in passage_ids {
        let rows = index
            .passage_rows(pid)
            .ok_or_else(|| GidxError::validation(format!("negative passage {pid} not in index")))?;
        out.extend(rows.iter().map(|&r| index.phrase(r).phrase_id));
    }
    Ok(out)
}

fn mined_passages(
    ex: &TrainingExample,
    scheme: NegativeScheme,
    sources: &NegativeSources<'_>,
) -> Result<Vec<String>> {
    if let Some(ids) = ex.negatives.get(&scheme) {
        return Ok(ids.clone());
    }
    match scheme {
        NegativeScheme::Bm25Hard => {
            let bm25 = sources.bm25.ok_or_else(|| {
                GidxError::validation("bm25_hard negatives need mined ids or a BM25 index")
            })?;
            Ok(mine_bm25_negatives(bm25, &ex.query_text, &ex.answers, 1))
        }
        NegativeScheme::SamePhrase => {
            let passages = sources.passages.ok_or_else(|| {
                GidxError::validation("same_phrase negatives need mined ids or the passage list")
            })?;
            let gold = ex.gold_passage_id.as_deref().unwrap_or("");
            Ok(ex
                .answers
                .first()
                .map(|a| mine_same_phrase_negatives(passages, a, gold, 1))
                .unwrap_or_default())
        }
        _ => Ok(Vec::new()),
    }
}

/// Negative phrase ids for each example of a batch: the union of the enabled
/// schemes, deduplicated, sorted, never containing the example's positive.
pub fn build_negative_sets(
    batch: &[TrainingExample],
    schemes: &BTreeSet<NegativeScheme>,
    index: &PhraseIndex,
    sources: &NegativeSources<'_>,
) -> Result<Vec<Vec<u64>>> {
    if schemes.contains(&NegativeScheme::InBatch) && batch.len() < 2 {
        return Err(GidxError::validation(
            "in-batch negatives need a batch of at least 2 examples",
        ));
    }
    let mut out = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let pos = ex.positive.ok_or_else(|| {
            GidxError::validation(format!("example {} has no positive phrase", ex.query_id))
        })?;
        let mut set = BTreeSet::new();
        for scheme in schemes {
            match scheme {
                NegativeScheme::InBatch => {
                    set.extend(
                        batch
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .filter_map(|(_, other)| other.positive),
                    );
                }
                NegativeScheme::InPassage => {
                    let row = index.row_of(pos).ok_or_else(|| {
                        GidxError::validation(format!("positive phrase {pos} not in index"))
                    })?;
                    let pid = &index.phrase(row).passage_id;
                    let answers: Vec<String> =
                        ex.answers.iter().map(|a| text::normalize(a)).collect();
                    let rows = index.passage_rows(pid).unwrap_or(&[]);
                    set.extend(
                        rows.iter()
                            .map(|&r| index.phrase(r))
                            .filter(|p| !answers.contains(&text::normalize(&p.surface)))
                            .map(|p| p.phrase_id),
                    );
                }
                NegativeScheme::Bm25Hard | NegativeScheme::SamePhrase => {
                    let passages = mined_passages(ex, *scheme, sources)?;
                    set.extend(phrases_of_passages(index, &passages)?);
                }
            }
        }
        set.remove(&pos);
        out.push(set.into_iter().collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastiveReport {
    #[serde(skip)]
    pub encoder: QueryEncoder,
    pub loss_history: Vec<f64>,
}

/// Train the query encoder with the phrase-level contrastive loss under `cfg.negative_schemes`.
pub fn train_contrastive(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    data: &[TrainingExample],
    cfg: &TrainConfig,
    sources: &NegativeSources<'_>,
) -> Result<ContrastiveReport> {
    cfg.validate()?;
    encoder.check_index(index)?;
    let vectors = scoring_vectors(index, cfg.quantization_aware)?;
    let row = |id: u64| {
        index
            .row_of(id)
            .ok_or_else(|| GidxError::validation(format!("phrase {id} not in index")))
    };
    let mut enc = encoder.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in cfg.batches(data.len(), epoch) {
            let examples: Vec<TrainingExample> = batch.iter().map(|&i| data[i].clone()).collect();
            let negatives = build_negative_sets(&examples, &cfg.negative_schemes, index, sources)?;
            let mut grad = vec![0.0; enc.weight.len()];
            for (ex, negs) in examples.iter().zip(&negatives) {
                enc.check_features(&ex.features)?;
                let q = enc.encode(&ex.features);
                let pos_row = row(ex.positive.unwrap_or_default())?;
                let mut rows = Vec::with_capacity(negs.len() + 1);
                rows.push(pos_row);
                for &n in negs {
                    rows.push(row(n)?);
                }
                let scores: Vec<f64> = rows
                    .iter()
                    .map(|&r| dot_mixed(vectors.row(r), &q))
                    .collect();
                total += nll_loss(scores[0], &scores[1..]);
                count += 1;
                let lse = log_sum_exp(scores.iter().copied());
                let mut gq = vec![0.0; q.len()];
                for (j, (&r, &s)) in rows.iter().zip(&scores).enumerate() {
                    let w = (s - lse).exp() - if j == 0 { 1.0 } else { 0.0 };
                    for (g, v) in gq.iter_mut().zip(vectors.row(r)) {
                        *g += w * *v as f64;
                    }
                }
                outer_into(&mut grad, &gq, &ex.features, 1.0);
            }
            let step = cfg.learning_rate / examples.len() as f64;
            for (w, g) in enc.weight.iter_mut().zip(&grad) {
                *w -= step * g;
            }
        }
        history.push(if count == 0 {
            0.0
        } else {
            total / count as f64
        });
    }
    Ok(ContrastiveReport {
        encoder: enc,
        loss_history: history,
    })
}

// ---------------------------------------------------------------------------
// diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticLoss {
    /// Mean loss, `None` when every example was skipped.
    pub loss: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Best active phrase score of each passage, keyed by passage id.
fn passage_scores<'a>(index: &'a PhraseIndex, q: &[f64]) -> HashMap<&'a str, f64> {
    index
        .passages()
        .filter_map(|(pid, rows)| {
            rows.iter()
                .filter(|&&r| index.is_active(r))
                .map(|&r| dot_mixed(index.vectors().row(r), q))
                .reduce(f64::max)
                .map(|s| (pid, s))
        })
        .collect()
}

/// Contrastive loss of each gold passage against `num_random` uniformly sampled other passages.
pub fn l_topic(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    dev: &[TrainingExample],
    num_random: usize,
    seed: u64,
) -> Result<DiagnosticLoss> {
    encoder.check_index(index)?;
    let scorable: Vec<&str> = index
        .passages()
        .filter(|(_, rows)| rows.iter().any(|&r| index.is_active(r)))
        .map(|(p, _)| p)
        .collect();
    if scorable.len() < num_random + 1 {
        return Err(GidxError::validation(format!(
            "need at least {} passages with active phrases, found {}",
            num_random + 1,
            scorable.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for ex in dev {
        encoder.check_features(&ex.features)?;
        let Some(gold) = ex.gold_passage_id.as_deref() else {
            skipped += 1;
            continue;
        };
        let q = encoder.encode(&ex.features);
        let scores = passage_scores(index, &q);
        let Some(&pos) = scores.get(gold) else {
            skipped += 1;
            continue;
        };
        let pool: Vec<&str> = scorable.iter().copied().filter(|p| *p != gold).collect();
        let negs: Vec<f64> = index::sample(&mut rng, pool.len(), num_random)
            .into_iter()
            .map(|i| scores[pool[i]])
            .collect();
        total += nll_loss(pos, &negs);
        evaluated += 1;
    }
    finish(total, evaluated, skipped)
}

fn finish(total: f64, evaluated: usize, skipped: usize) -> Result<DiagnosticLoss> {
    Ok(DiagnosticLoss {
        loss: (evaluated > 0).then(|| total / evaluated as f64),
        evaluated,
        skipped,
    })
}

/// Sentences as word-index ranges; a sentence ends at a word ending in `.`, `!` or `?`.
pub fn split_sentences(words: &[String]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, w) in words.iter().enumerate() {
        if w.ends_with(['.', '!', '?']) {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < words.len() {
        out.push(start..words.len());
    }
    out
}

/// The gold passage with every answer-bearing sentence removed, or `None` when
/// that leaves nothing, removes nothing, or the passage is a single sentence.
pub fn hard_negative_words(words: &[String], answers: &[String]) -> Option<Vec<String>> {
    let sentences = split_sentences(words);
    if sentences.len() < 2 {
        return None;
    }
    let mut kept = Vec::new();
    let mut removed = false;
    for s in sentences {
        let sentence = words[s.clone()].join(" ");
        if text::contains_any(&sentence, answers) {
            removed = true;
        } else {
            kept.extend_from_slice(&words[s]);
        }
    }
    (removed && !kept.is_empty()).then_some(kept)
}

/// Contrastive loss of each gold passage against one hard negative built by
/// deleting its answer sentence and re-embedding the remaining phrases.
pub fn l_hard(
    encoder: &QueryEncoder,
    index: &PhraseIndex,
    dev: &[TrainingExample],
    passages: &[Passage],
    phrase_encoder: &dyn PhraseEncoder,
    max_phrase_len: usize,
) -> Result<DiagnosticLoss> {
    encoder.check_index(index)?;
    if phrase_encoder.dim() != index.dim() {
        return Err(GidxError::validation(
            "phrase encoder dimension does not match index",
        ));
    }
    let by_id: HashMap<&str, &Passage> = passages
        .iter()
        .map(|p| (p.passage_id.as_str(), p))
        .collect();
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for ex in dev {
        encoder.check_features(&ex.features)?;
        let gold = ex.gold_passage_id.as_deref().and_then(|g| by_id.get(g));
        let Some(gold) = gold else {
            skipped += 1;
            continue;
        };
        let q = encoder.encode(&ex.features);
        let pos = index.passage_rows(&gold.passage_id).and_then(|rows| {
            rows.iter()
                .filter(|&&r| index.is_active(r))
                .map(|&r| dot_mixed(index.vectors().row(r), &q))
                .reduce(f64::max)
        });
        let neg_words = hard_negative_words(&gold.word_tokens, &ex.answers);
        let (Some(pos), Some(neg_words)) = (pos, neg_words) else {
            skipped += 1;
            continue;
        };
        let neg_passage = Passage {
            passage_id: format!("{}~hard", gold.passage_id),
            doc_id: gold.doc_id.clone(),
            word_tokens: neg_words,
            char_offset: 0,
        };
        let neg = enumerate_phrases(&neg_passage, max_phrase_len, 0)?
            .iter()
            .map(|p| {
                dot_mixed(
                    &phrase_encoder.encode_span(&neg_passage.word_tokens, p.span),
                    &q,
                )
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += nll_loss(pos, &[neg]);
        evaluated += 1;
    }
    finish(total, evaluated, skipped)
}

// ---------------------------------------------------------------------------
// gradient checking

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GradCheckError {
    #[error("non-finite loss or gradient at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
}

/// Denominator floor for relative errors, so components that are ~0 in both
/// gradients compare absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare `f`'s analytic gradient with central differences of step `h`.
///
/// `f` returns `(loss, gradient)`. With `sample = Some((n, seed))` only `n`
/// seeded random coordinates are checked.
pub fn grad_check(
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
    params: &[f64],
    h: f64,
    sample: Option<(usize, u64)>,
) -> std::result::Result<GradCheckReport, GradCheckError> {
    let (base, analytic) = f(params);
    if !base.is_finite() {
        return Err(GradCheckError::NonFinite { coordinate: 0 });
    }
    let coords: Vec<usize> = match sample {
        Some((n, seed)) if n < params.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c = index::sample(&mut rng, params.len(), n).into_vec();
            c.sort_unstable();
            c
        }
        _ => (0..params.len()).collect(),
    };
    let mut p = params.to_vec();
    let mut worst = (0.0f64, 0usize);
    for &i in &coords {
        let orig = p[i];
        p[i] = orig + h;
        let plus = f(&p).0;
        p[i] = orig - h;
        let minus = f(&p).0;
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        if !(plus.is_finite() && minus.is_finite() && a.is_finite()) {
            return Err(GradCheckError::NonFinite { coordinate: i });
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_coordinate: worst.1,
        checked: coords.len(),
    })
}

/// Seeded uniform matrix in `[-1, 1)`, handy for initial weights and tests.
pub fn random_weights(dim_out: usize, dim_in: usize, scale: f64, seed: u64) -> QueryEncoder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = (0..dim_in * dim_out)
        .map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0))
        .collect();
    QueryEncoder {
        dim_in,
        dim_out,
        weight,
    }
}

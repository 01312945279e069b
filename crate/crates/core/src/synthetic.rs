//! Seeded synthetic corpora with known geometry, used by tests and examples.
//!
//! * [`TwoSignalTask`]: phrase vectors carry a passage-topic signal (dims
//!   0..16) and a word-level fine signal (dims 16..32). Random passages differ
//!   in topic; the answer-removed gold passage differs only in fine signal.
//! * [`SeparableDocTask`]: phrase vectors cluster by document; query features
//!   are a hidden rotation of the cluster centre, so the identity encoder is
//!   near chance and a trained one is near perfect.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{enumerate_phrases, Passage, Phrase, PhraseEncoder};
use crate::error::Result;
use crate::index::{build_index, PhraseIndex};
use crate::matrix::Matrix;
use crate::training::{NegativeScheme, TrainingExample};

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v = normal_vec(rng, dim);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Width of each signal block.
pub const BLOCK_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSignalConfig {
    pub topics: usize,
    pub passages_per_topic: usize,
    pub sentences: usize,
    pub words_per_sentence: usize,
    pub max_phrase_len: usize,
    pub fine_codes: usize,
    pub topic_weight: f64,
    pub fine_weight: f64,
    pub query_noise: f64,
    pub seed: u64,
}

impl Default for TwoSignalConfig {
    fn default() -> Self {
        TwoSignalConfig {
            topics: 40,
            passages_per_topic: 3,
            sentences: 4,
            words_per_sentence: 4,
            max_phrase_len: 2,
            fine_codes: 8,
            topic_weight: 1.0,
            fine_weight: 1.0,
            query_noise: 0.3,
            seed: 0,
        }
    }
}

/// Embeds words of the form `t{topic}c{code}...`: the topic vector scaled by
/// `topic_weight`, concatenated with the mean fine-code vector scaled by `fine_weight`.
#[derive(Debug, Clone)]
pub struct SyntheticPhraseEncoder {
    topic_vectors: Vec<Vec<f64>>,
    code_vectors: Vec<Vec<f64>>,
    topic_weight: f64,
    fine_weight: f64,
}

impl SyntheticPhraseEncoder {
    fn parse(word: &str) -> (usize, usize) {
        let w = word.trim_end_matches(['.', '!', '?']);
        let rest = w.strip_prefix('t').expect("synthetic word starts with t");
        let (topic, rest) = rest.split_once('c').expect("synthetic word has a code");
        let code: String = rest.chars().take_while(char::is_ascii_digit).collect();
        (
            topic.parse().expect("numeric topic"),
            code.parse().expect("numeric code"),
        )
    }
}

impl PhraseEncoder for SyntheticPhraseEncoder {
    fn dim(&self) -> usize {
        2 * BLOCK_DIM
    }

    fn encode_span(&self, words: &[String], span: (usize, usize)) -> Vec<f32> {
        let span_words = &words[span.0..=span.1];
        let n = span_words.len() as f64;
        let mut v = vec![0.0f64; 2 * BLOCK_DIM];
        for w in span_words {
            let (t, c) = Self::parse(w);
            for i in 0..BLOCK_DIM {
                v[i] += self.topic_weight * self.topic_vectors[t][i] / n;
                v[BLOCK_DIM + i] += self.fine_weight * self.code_vectors[c][i] / n;
            }
        }
        v.into_iter().map(|x| x as f32).collect()
    }
}

pub struct TwoSignalTask {
    pub config: TwoSignalConfig,
    pub passages: Vec<Passage>,
    pub encoder: SyntheticPhraseEncoder,
    pub index: PhraseIndex,
    pub train: Vec<TrainingExample>,
    pub dev: Vec<TrainingExample>,
}

impl TwoSignalTask {
    /// Every passage holds one answer word with fine code `c*`; its other words
    /// use codes other than `c*`. Each passage gets one training and one dev query.
    pub fn generate(config: TwoSignalConfig) -> Result<Self> {
        let cfg = &config;
        let mut rng = rng_for(cfg.seed, 0);
        let topic_vectors: Vec<Vec<f64>> = (0..cfg.topics)
            .map(|_| unit_vec(&mut rng, BLOCK_DIM))
            .collect();
        let code_vectors: Vec<Vec<f64>> = (0..cfg.fine_codes)
            .map(|_| unit_vec(&mut rng, BLOCK_DIM))
            .collect();
        let encoder = SyntheticPhraseEncoder {
            topic_vectors,
            code_vectors,
            topic_weight: cfg.topic_weight,
            fine_weight: cfg.fine_weight,
        };

        let n_words = cfg.sentences * cfg.words_per_sentence;
        let mut passages = Vec::new();
        let mut answers = Vec::new();
        for t in 0..cfg.topics {
            for p in 0..cfg.passages_per_topic {
                let answer_pos = rng.random_range(0..n_words);
                let cstar = rng.random_range(0..cfg.fine_codes);
                let words: Vec<String> = (0..n_words)
                    .map(|i| {
                        let mut w = if i == answer_pos {
                            format!("t{t}c{cstar}ans{p}")
                        } else {
                            let mut c = rng.random_range(0..cfg.fine_codes - 1);
                            if c >= cstar {
                                c += 1;
                            }
                            format!("t{t}c{c}w{i}")
                        };
                        if (i + 1) % cfg.words_per_sentence == 0 {
                            w.push('.');
                        }
                        w
                    })
                    .collect();
                let doc_id = format!("t{t}p{p}");
                passages.push(Passage {
                    passage_id: format!("{doc_id}#0"),
                    doc_id,
                    word_tokens: words,
                    char_offset: 0,
                });
                answers.push((format!("t{t}c{cstar}ans{p}"), t, cstar));
            }
        }

        let mut phrases: Vec<Phrase> = Vec::new();
        let mut rows: Vec<Vec<f32>> = Vec::new();
        for p in &passages {
            for ph in enumerate_phrases(p, cfg.max_phrase_len, phrases.len() as u64)? {
                rows.push(encoder.encode_span(&p.word_tokens, ph.span));
                phrases.push(ph);
            }
        }
        let vectors = Matrix::from_rows(&rows, encoder.dim())?;
        let index = build_index(phrases, vectors, 0.0)?;

        let mut qrng = rng_for(cfg.seed, 1);
        let mut make = |split: &str| -> Vec<TrainingExample> {
            passages
                .iter()
                .zip(&answers)
                .map(|(p, (ans, t, c))| {
                    let mut features = Vec::with_capacity(2 * BLOCK_DIM);
                    for (base, noise) in [
                        (&encoder.topic_vectors[*t], normal_vec(&mut qrng, BLOCK_DIM)),
                        (&encoder.code_vectors[*c], normal_vec(&mut qrng, BLOCK_DIM)),
                    ] {
                        features.extend(
                            base.iter()
                                .zip(&noise)
                                .map(|(b, n)| (b + cfg.query_noise * n) as f32),
                        );
                    }
                    let answers = vec![ans.clone()];
                    let positive = index.passage_rows(&p.passage_id).and_then(|rows| {
                        rows.iter()
                            .map(|&r| index.phrase(r))
                            .find(|ph| crate::text::normalize(&ph.surface) == *ans)
                            .map(|ph| ph.phrase_id)
                    });
                    TrainingExample {
                        query_id: format!("{split}-{}", p.doc_id),
                        query_text: format!("which word in {}", p.doc_id),
                        features,
                        positive,
                        gold_passage_id: Some(p.passage_id.clone()),
                        gold_docs: BTreeSet::from([p.doc_id.clone()]),
                        negatives: BTreeMap::<NegativeScheme, Vec<String>>::new(),
                        answers,
                    }
                })
                .collect()
        };
        let train = make("train");
        let dev = make("dev");
        Ok(TwoSignalTask {
            config,
            passages,
            encoder,
            index,
            train,
            dev,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableDocConfig {
    pub docs: usize,
    pub passages_per_doc: usize,
    pub words_per_passage: usize,
    pub max_phrase_len: usize,
    pub dim: usize,
    pub phrase_noise: f64,
    pub query_noise: f64,
    pub queries_per_doc: usize,
    pub seed: u64,
}

impl Default for SeparableDocConfig {
    fn default() -> Self {
        SeparableDocConfig {
            docs: 10,
            passages_per_doc: 2,
            words_per_passage: 6,
            max_phrase_len: 2,
            dim: 16,
            phrase_noise: 0.1,
            query_noise: 0.05,
            queries_per_doc: 4,
            seed: 0,
        }
    }
}

pub struct SeparableDocTask {
    pub config: SeparableDocConfig,
    pub passages: Vec<Passage>,
    pub index: PhraseIndex,
    pub train: Vec<TrainingExample>,
    pub dev: Vec<TrainingExample>,
    /// Hidden orthogonal map applied to the centres to form query features.
    pub mixing: Vec<f64>,
}

impl SeparableDocTask {
    pub fn generate(config: SeparableDocConfig) -> Result<Self> {
        let cfg = &config;
        let d = cfg.dim;
        let mut rng = rng_for(cfg.seed, 0);
        let centres: Vec<Vec<f64>> = (0..cfg.docs).map(|_| unit_vec(&mut rng, d)).collect();

        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let mixing: Vec<f64> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| q[(i, j)])
            .collect();

        let mut passages = Vec::new();
        for doc in 0..cfg.docs {
            for p in 0..cfg.passages_per_doc {
                passages.push(Passage {
                    passage_id: format!("doc{doc}#{p}"),
                    doc_id: format!("doc{doc}"),
                    word_tokens: (0..cfg.words_per_passage)
                        .map(|w| format!("d{doc}p{p}w{w}"))
                        .collect(),
                    char_offset: 0,
                });
            }
        }
        let mut phrases = Vec::new();
        let mut rows = Vec::new();
        for (pi, p) in passages.iter().enumerate() {
            let doc = pi / cfg.passages_per_doc;
            for ph in enumerate_phrases(p, cfg.max_phrase_len, phrases.len() as u64)? {
                let noise = normal_vec(&mut rng, d);
                rows.push(
                    centres[doc]
                        .iter()
                        .zip(&noise)
                        .map(|(c, n)| (c + cfg.phrase_noise * n) as f32)
                        .collect::<Vec<f32>>(),
                );
                phrases.push(ph);
            }
        }
        let index = build_index(phrases, Matrix::from_rows(&rows, d)?, 0.0)?;

        let mut qrng = rng_for(cfg.seed, 1);
        let mut make = |split: &str| -> Vec<TrainingExample> {
            let mut out = Vec::new();
            for (doc, c) in centres.iter().enumerate() {
                for n in 0..cfg.queries_per_doc {
                    let noise = normal_vec(&mut qrng, d);
                    let features = (0..d)
                        .map(|i| {
                            let mixed: f64 = (0..d).map(|j| mixing[i * d + j] * c[j]).sum();
                            (mixed + cfg.query_noise * noise[i]) as f32
                        })
                        .collect();
                    out.push(TrainingExample {
                        query_id: format!("{split}-doc{doc}-{n}"),
                        query_text: format!("query {n} about doc{doc}"),
                        features,
                        positive: None,
                        gold_passage_id: None,
                        gold_docs: BTreeSet::from([format!("doc{doc}")]),
                        negatives: BTreeMap::new(),
                        answers: Vec::new(),
                    });
                }
            }
            out
        };
        let train = make("train");
        let dev = make("dev");
        Ok(SeparableDocTask {
            config,
            passages,
            index,
            train,
            dev,
            mixing,
        })
    }
}

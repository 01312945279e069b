//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use gidx::{build_index, Granularity, Matrix, Phrase, PhraseIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, gaussian(rng, rows * cols)).unwrap()
}

/// Phrase metadata for `counts[d][p]` phrases in passage `p` of document `d`,
/// with ids shuffled so row order and id order differ.
pub fn phrases_for(counts: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<Phrase> {
    let mut out = Vec::new();
    for (d, passages) in counts.iter().enumerate() {
        for (p, &n) in passages.iter().enumerate() {
            for i in 0..n {
                out.push(Phrase {
                    phrase_id: 0,
                    passage_id: format!("doc{d}#{p}"),
                    doc_id: format!("doc{d}"),
                    span: (i, i),
                    surface: format!("w{d}_{p}_{i}"),
                    filter_score: rng.random::<f32>(),
                });
            }
        }
    }
    let mut ids: Vec<u64> = (0..out.len() as u64).map(|i| i * 3 + 1).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    for (p, id) in out.iter_mut().zip(ids) {
        p.phrase_id = id;
    }
    out
}

pub struct Instance {
    pub phrases: Vec<Phrase>,
    pub vectors: Matrix,
    pub tau: f32,
    pub index: PhraseIndex,
}

/// Random index with at most 2000 phrases and dimension at most 64.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let dim = r.random_range(2..=64);
    let docs = r.random_range(1..=25);
    let mut counts: Vec<Vec<usize>> = (0..docs)
        .map(|_| {
            (0..r.random_range(1..=4))
                .map(|_| r.random_range(1..=30))
                .collect()
        })
        .collect();
    while counts.iter().flatten().sum::<usize>() > 2000 {
        counts.pop();
    }
    let phrases = phrases_for(&counts, &mut r);
    let vectors = gaussian_matrix(&mut r, phrases.len(), dim);
    let tau = if r.random_bool(0.3) {
        0.0
    } else {
        r.random_range(0.0..0.6)
    };
    let index = build_index(phrases.clone(), vectors.clone(), tau).unwrap();
    Instance {
        phrases,
        vectors,
        tau,
        index,
    }
}

/// Full-scan ranking: every active phrase scored in `f64`, rounded to `f32`,
/// grouped by unit; a unit keeps its best score and the lowest phrase id at
/// that score; units sorted by score then that phrase id.
pub fn oracle_rank(
    phrases: &[Phrase],
    vectors: &Matrix,
    tau: f32,
    q: &[f32],
    granularity: Granularity,
) -> Vec<(String, f32, u64)> {
    let mut best: HashMap<String, (f32, u64)> = HashMap::new();
    for (row, p) in phrases.iter().enumerate() {
        if p.filter_score < tau {
            continue;
        }
        let mut s = 0.0f64;
        for (a, b) in vectors.row(row).iter().zip(q) {
            s += *a as f64 * *b as f64;
        }
        let s = s as f32;
        let unit = match granularity {
            Granularity::Phrase => p.phrase_id.to_string(),
            Granularity::Passage => p.passage_id.clone(),
            Granularity::Document => p.doc_id.clone(),
        };
        let e = best.entry(unit).or_insert((s, p.phrase_id));
        if s > e.0 || (s == e.0 && p.phrase_id < e.1) {
            *e = (s, p.phrase_id);
        }
    }
    let mut out: Vec<(String, f32, u64)> =
        best.into_iter().map(|(u, (s, id))| (u, s, id)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
    out
}

/// `-ln(e^pos / (e^pos + Σ e^neg))` straight from the definition, in `f64`.
pub fn direct_nll(pos: f64, negs: &[f64]) -> f64 {
    let num = pos.exp();
    let den: f64 = num + negs.iter().map(|n| n.exp()).sum::<f64>();
    -(num / den).ln()
}

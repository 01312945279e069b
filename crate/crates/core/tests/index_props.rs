mod common;

use std::collections::HashSet;

use common::*;
use gidx::quantizer::{memory_footprint, QuantizerModel};
use gidx::{train_opq, train_pq, Granularity, SearchMode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hits_are_sorted_unique_and_match_the_oracle(seed in 0u64..10_000, k in 1usize..40) {
        let inst = random_instance(seed);
        let q = gaussian(&mut rng(seed ^ 0xabc), inst.index.dim());
        for gran in [Granularity::Phrase, Granularity::Passage, Granularity::Document] {
            let hits = inst.index.search("q", &q, k, gran, SearchMode::Exact).unwrap().hits;
            prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
            let unique: HashSet<&str> = hits.iter().map(|h| h.unit_id.as_str()).collect();
            prop_assert_eq!(unique.len(), hits.len());
            let oracle = oracle_rank(&inst.phrases, &inst.vectors, inst.tau, &q, gran);
            prop_assert_eq!(hits.len(), k.min(oracle.len()));
            for (h, o) in hits.iter().zip(&oracle) {
                prop_assert_eq!(&h.unit_id, &o.0);
            }
        }
    }

    #[test]
    fn raising_tau_never_adds_rows(seed in 0u64..10_000, a in 0.0f32..1.0, b in 0.0f32..1.0) {
        let inst = random_instance(seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (inst.index.with_tau(lo).stats(), inst.index.with_tau(hi).stats());
        prop_assert!(s_hi.num_active <= s_lo.num_active);
        prop_assert!(s_hi.vec_per_passage <= s_lo.vec_per_passage);
        prop_assert!(s_hi.bytes <= s_lo.bytes);
        // the original view is untouched
        prop_assert_eq!(inst.index.tau(), inst.tau);
    }

    #[test]
    fn compaction_preserves_results(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let compact = inst.index.compact().unwrap();
        prop_assert_eq!(compact.len(), inst.index.num_active());
        let q = gaussian(&mut rng(seed), inst.index.dim());
        for gran in [Granularity::Phrase, Granularity::Passage, Granularity::Document] {
            let a = inst.index.search("q", &q, 10, gran, SearchMode::Exact).unwrap();
            let b = compact.search("q", &q, 10, gran, SearchMode::Exact).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn footprint_formula(d_mult in 1usize..16, m in 1usize..9, log_k in 1u32..10, n in 0usize..5000) {
        let d = d_mult * m;
        let k = 1usize << log_k;
        let codes = (n * m * log_k as usize).div_ceil(8);
        prop_assert_eq!(memory_footprint(d, m, k, false, n), (k * d * 4 + codes) as u64);
        prop_assert_eq!(memory_footprint(d, m, k, true, n), (k * d * 4 + d * d * 4 + codes) as u64);
    }
}

/// Top-10 overlap between quantized and exact search on 8 Gaussian clusters
/// (1000 vectors, d = 32) for a given code size.
fn clustered_recall(m: usize, k: usize) -> f64 {
    let mut r = rng(31);
    let (n, d, clusters) = (1000, 32, 8);
    let centres: Vec<Vec<f32>> = (0..clusters).map(|_| gaussian(&mut r, d)).collect();
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|i| {
            let noise = gaussian(&mut r, d);
            centres[i % clusters]
                .iter()
                .zip(&noise)
                .map(|(c, e)| c + 0.5 * e)
                .collect()
        })
        .collect();
    let vectors = gidx::Matrix::from_rows(&rows, d).unwrap();
    let counts: Vec<Vec<usize>> = (0..n).map(|_| vec![1]).collect();
    let phrases: Vec<gidx::Phrase> = phrases_for(&counts, &mut r)
        .into_iter()
        .map(|p| gidx::Phrase {
            filter_score: 1.0,
            ..p
        })
        .collect();
    let index = gidx::build_index(phrases, vectors.clone(), 0.0).unwrap();
    let (model, _) = train_pq(&vectors, m, k, 25, 0).unwrap();
    let qindex = index.attach_quantizer(model).unwrap();
    let queries = 50;
    let mut qr = rng(32);
    let mut recall = 0.0;
    for _ in 0..queries {
        let q = gaussian(&mut qr, d);
        let exact: HashSet<String> = index
            .search_phrases(&q, 10, SearchMode::Exact)
            .unwrap()
            .into_iter()
            .map(|h| h.unit_id)
            .collect();
        let approx = qindex
            .search_phrases(&q, 10, SearchMode::Quantized)
            .unwrap();
        recall += approx.iter().filter(|h| exact.contains(&h.unit_id)).count() as f64 / 10.0;
    }
    recall / queries as f64
}

#[test]
fn quantized_recall_grows_with_code_size() {
    // 32, 64 and 128 bits per vector
    let recalls = [
        clustered_recall(8, 16),
        clustered_recall(8, 256),
        clustered_recall(16, 256),
    ];
    println!("recall@10 by code size: {recalls:?}");
    assert!(recalls.windows(2).all(|w| w[1] > w[0]), "{recalls:?}");
    assert!(recalls[2] >= 0.8, "{recalls:?}");
}

#[test]
fn quantized_search_without_quantizer_is_a_state_error() {
    let inst = random_instance(1);
    let q = vec![0.0; inst.index.dim()];
    let err = inst
        .index
        .search_phrases(&q, 1, SearchMode::Quantized)
        .unwrap_err();
    assert!(err.is_usage());
}

#[test]
fn model_files_round_trip_for_pq_and_opq() {
    let mut r = rng(3);
    let data = gaussian_matrix(&mut r, 300, 12);
    for model in [
        train_pq(&data, 3, 8, 5, 1).unwrap().0,
        train_opq(&data, 3, 8, 2, 5, 1).unwrap().0,
    ] {
        let bytes = model.to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"GOPQ1");
        let back = QuantizerModel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            back.encode_all(&data).unwrap(),
            model.encode_all(&data).unwrap()
        );
    }
}

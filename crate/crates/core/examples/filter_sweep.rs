//! Raise the phrase filter threshold and watch index size shrink while
//! passage scores can only fall.

use gidx::{
    build_index, featurize, Corpus, Document, FeaturizerConfig, HashingFeaturizer, SearchMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gidx::Result<()> {
    let texts = [
        "rivers carve canyons over millions of years",
        "glaciers carve valleys during ice ages",
        "wind shapes dunes in deserts",
    ];
    let docs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document {
            doc_id: format!("d{i}"),
            title: String::new(),
            text: (*t).into(),
            passage_ids: vec![],
        })
        .collect();
    let mut corpus = Corpus::from_documents(docs)?;
    corpus.segment(100)?;
    let mut phrases = corpus.enumerate_phrases(3)?;
    // stand-in for a learned filter: random scores, with single words favoured
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in &mut phrases {
        let bonus = if p.word_len() == 1 { 0.3 } else { 0.0 };
        p.filter_score = (rng.random::<f32>() * 0.7 + bonus).min(1.0);
    }
    let featurizer = FeaturizerConfig::default();
    let vectors = corpus.embed_phrases(&phrases, &HashingFeaturizer(featurizer))?;
    let base = build_index(phrases, vectors, 0.0)?;
    let q = featurize("what carves canyons", &featurizer);

    println!(
        "{:>5} {:>7} {:>10} {:>9}  best passage",
        "tau", "active", "vec/pass", "bytes"
    );
    for tau in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let index = base.with_tau(tau);
        let stats = index.stats();
        let top = index.search_passages(&q, 1, SearchMode::Exact)?;
        let best = top
            .first()
            .map_or("-".to_string(), |h| format!("{} {:.3}", h.unit_id, h.score));
        println!(
            "{tau:>5.1} {:>7} {:>10.2} {:>9}  {best}",
            stats.num_active, stats.vec_per_passage, stats.bytes
        );
    }
    Ok(())
}

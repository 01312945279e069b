//! Segment a tiny corpus, embed every phrase with the hashing featurizer and
//! query the index at phrase, passage and document granularity.

use gidx::corpus::DEFAULT_BLOCK_WORDS;
use gidx::{
    build_index, featurize, Corpus, Document, FeaturizerConfig, Granularity, HashingFeaturizer,
    SearchMode,
};

fn doc(id: &str, text: &str) -> Document {
    Document {
        doc_id: id.into(),
        title: id.into(),
        text: text.into(),
        passage_ids: vec![],
    }
}

fn main() -> gidx::Result<()> {
    let mut corpus = Corpus::from_documents(vec![
        doc(
            "eiffel",
            "The Eiffel Tower was completed in 1889 for the World Fair in Paris.",
        ),
        doc(
            "liberty",
            "The Statue of Liberty was dedicated in 1886 in New York Harbor.",
        ),
        doc(
            "colosseum",
            "The Colosseum in Rome could hold tens of thousands of spectators.",
        ),
    ])?;
    corpus.segment(DEFAULT_BLOCK_WORDS)?;
    let phrases = corpus.enumerate_phrases(4)?;
    let featurizer = FeaturizerConfig {
        dim: 128,
        ..FeaturizerConfig::default()
    };
    let vectors = corpus.embed_phrases(&phrases, &HashingFeaturizer(featurizer))?;
    let index = build_index(phrases, vectors, 0.0)?;
    println!(
        "{} phrases over {} passages",
        index.len(),
        index.passage_ids().len()
    );

    let query = "statue of liberty dedicated";
    let q = featurize(query, &featurizer);
    for granularity in [
        Granularity::Phrase,
        Granularity::Passage,
        Granularity::Document,
    ] {
        let result = index.search("q", &q, 3, granularity, SearchMode::Exact)?;
        println!("{granularity:?}:");
        for hit in &result.hits {
            let evidence = &index.phrase(index.row_of(hit.evidence).unwrap()).surface;
            println!("  {:<12} {:.3}  via {:?}", hit.unit_id, hit.score, evidence);
        }
    }
    Ok(())
}

//! Mine BM25 hard negatives (lexically close, answer free) and same-answer
//! negatives (other passages mentioning the answer).

use gidx::lexical::{build_bm25, mine_bm25_negatives, mine_same_phrase_negatives};
use gidx::{Corpus, Document};

fn main() -> gidx::Result<()> {
    let texts = [
        (
            "moon",
            "Neil Armstrong first walked on the Moon in 1969 during Apollo 11.",
        ),
        (
            "apollo",
            "The Apollo program ran missions to the Moon between 1961 and 1972.",
        ),
        (
            "gagarin",
            "Yuri Gagarin first orbited the Earth in 1961 aboard Vostok 1.",
        ),
        (
            "armstrong",
            "Armstrong was born in Ohio and later taught engineering.",
        ),
        ("mars", "Rovers have explored Mars since 1997."),
    ];
    let docs = texts
        .iter()
        .map(|(id, t)| Document {
            doc_id: (*id).into(),
            title: String::new(),
            text: (*t).into(),
            passage_ids: vec![],
        })
        .collect();
    let mut corpus = Corpus::from_documents(docs)?;
    corpus.segment(100)?;
    let bm25 = build_bm25(&corpus.passages)?;

    let question = "who first walked on the moon";
    let answers = vec!["Neil Armstrong".to_string()];
    println!("BM25 ranking for {question:?}:");
    for (pid, score) in bm25.rank(question) {
        let marker = if bm25.passage_contains_any(&pid, &answers) {
            "contains answer"
        } else {
            ""
        };
        println!("  {pid:<12} {score:.3} {marker}");
    }
    println!(
        "hard negatives: {:?}",
        mine_bm25_negatives(&bm25, question, &answers, 2)
    );
    println!(
        "same-phrase negatives for \"Armstrong\": {:?}",
        mine_same_phrase_negatives(&corpus.passages, "Armstrong", "moon#0", 5)
    );
    Ok(())
}

//! Score ranked passage lists against answer strings and ranked document
//! lists against gold documents.

use std::collections::BTreeSet;

use gidx::eval::{metrics_report, relevance_lists, Judgment};
use gidx::{Granularity, Hit, RetrievalResult};

fn result(query_id: &str, granularity: Granularity, ids: &[&str]) -> RetrievalResult {
    let hits = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Hit {
            unit_id: (*id).into(),
            score: 1.0 - i as f32 * 0.1,
            evidence: i as u64,
        })
        .collect();
    RetrievalResult {
        query_id: query_id.into(),
        granularity,
        hits,
    }
}

fn main() -> gidx::Result<()> {
    let text = |pid: &str| {
        Some(
            match pid {
                "a#0" => "paris is the capital of france",
                "a#1" => "france borders spain",
                "b#0" => "berlin is the capital of germany",
                "c#0" => "madrid hosts the prado",
                _ => return None,
            }
            .to_string(),
        )
    };
    let judgments = vec![
        Judgment {
            query_id: "q1".into(),
            answers: vec!["Paris".into()],
            gold_docs: BTreeSet::from(["a".to_string()]),
        },
        Judgment {
            query_id: "q2".into(),
            answers: vec!["Berlin".into()],
            gold_docs: BTreeSet::from(["b".to_string()]),
        },
        Judgment {
            query_id: "q3".into(),
            answers: vec!["Madrid".into()],
            gold_docs: BTreeSet::from(["c".to_string(), "a".to_string()]),
        },
    ];
    let passages = vec![
        result("q1", Granularity::Passage, &["a#0", "b#0", "a#1"]),
        result("q2", Granularity::Passage, &["a#0", "b#0", "c#0"]),
        result("q3", Granularity::Passage, &["a#1", "b#0", "a#0"]),
    ];
    let documents = vec![
        result("q1", Granularity::Document, &["a", "b"]),
        result("q2", Granularity::Document, &["a", "b"]),
        result("q3", Granularity::Document, &["c", "b"]),
    ];
    let rel = relevance_lists(&passages, &judgments, text)?;
    let report = metrics_report(&rel, &[1, 3], Some((&documents, &judgments)), 0)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

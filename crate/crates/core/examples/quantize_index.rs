//! Compress phrase vectors with PQ and OPQ, compare reconstruction error and
//! footprint, then search with asymmetric distance lookup tables.

use gidx::synthetic::{TwoSignalConfig, TwoSignalTask};
use gidx::{train_opq, train_pq, SearchMode};

fn main() -> gidx::Result<()> {
    let task = TwoSignalTask::generate(TwoSignalConfig {
        topics: 30,
        ..TwoSignalConfig::default()
    })?;
    let index = task.index;
    let (n, d) = (index.len(), index.dim());
    let (m, k) = (8, 16);

    let (pq, pq_report) = train_pq(index.vectors(), m, k, 20, 1)?;
    let (opq, opq_report) = train_opq(index.vectors(), m, k, 5, 10, 1)?;
    println!("{n} vectors of dim {d}, raw {} bytes", n * d * 4);
    println!(
        "PQ : objective {:>9.3}, {} bytes",
        pq_report.final_objective,
        pq.memory_footprint(n)
    );
    println!(
        "OPQ: objective {:>9.3}, {} bytes, orthogonality error {:.1e}",
        opq_report.final_objective,
        opq.memory_footprint(n),
        opq.orthogonality_error()
    );

    let quantized = index.attach_quantizer(opq)?;
    let query: Vec<f32> = task.dev[0].features.clone();
    let exact = quantized.search_passages(&query, 5, SearchMode::Exact)?;
    let approx = quantized.search_passages(&query, 5, SearchMode::Quantized)?;
    println!(
        "{:<12} {:>8}   {:<12} {:>8}",
        "exact", "score", "quantized", "score"
    );
    for (e, a) in exact.iter().zip(&approx) {
        println!(
            "{:<12} {:>8.3}   {:<12} {:>8.3}",
            e.unit_id, e.score, a.unit_id, a.score
        );
    }
    Ok(())
}

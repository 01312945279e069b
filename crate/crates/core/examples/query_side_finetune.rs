//! Fine-tune only the query encoder against a frozen phrase index using
//! document-level supervision, exactly and against quantized vectors.

use gidx::eval::{r_precision, Judgment};
use gidx::synthetic::{SeparableDocConfig, SeparableDocTask};
use gidx::training::query_side_finetune;
use gidx::{
    train_pq, Granularity, PhraseIndex, QueryEncoder, RetrievalResult, SearchMode, TrainConfig,
    TrainingExample,
};

fn doc_r_precision(
    enc: &QueryEncoder,
    index: &PhraseIndex,
    dev: &[TrainingExample],
    mode: SearchMode,
) -> gidx::Result<f64> {
    let mut results: Vec<RetrievalResult> = Vec::new();
    let mut judgments = Vec::new();
    for ex in dev {
        let q = enc.encode_f32(&ex.features);
        results.push(index.search(
            &ex.query_id,
            &q,
            ex.gold_docs.len(),
            Granularity::Document,
            mode,
        )?);
        judgments.push(Judgment {
            query_id: ex.query_id.clone(),
            answers: vec![],
            gold_docs: ex.gold_docs.clone(),
        });
    }
    r_precision(&results, &judgments)
}

fn main() -> gidx::Result<()> {
    let task = SeparableDocTask::generate(SeparableDocConfig::default())?;
    let d = task.index.dim();
    let start = QueryEncoder::identity(d);
    let cfg = TrainConfig {
        learning_rate: 1.0,
        epochs: 30,
        top_k: task.index.len(),
        ..TrainConfig::default()
    };

    println!(
        "R-precision before: {:.2}",
        doc_r_precision(&start, &task.index, &task.dev, SearchMode::Exact)?
    );
    let exact = query_side_finetune(&start, &task.index, &task.train, &cfg)?;
    println!(
        "exact: loss {:.3} -> {:.3}, R-precision {:.2}",
        exact.loss_history[0],
        exact.loss_history.last().unwrap(),
        doc_r_precision(&exact.encoder, &task.index, &task.dev, SearchMode::Exact)?
    );

    let (model, _) = train_pq(task.index.vectors(), 4, 16, 20, 0)?;
    let quantized = task.index.attach_quantizer(model)?;
    let qa = TrainConfig {
        quantization_aware: true,
        ..cfg
    };
    let aware = query_side_finetune(&start, &quantized, &task.train, &qa)?;
    println!(
        "quantization-aware: loss {:.3} -> {:.3}, R-precision {:.2}",
        aware.loss_history[0],
        aware.loss_history.last().unwrap(),
        doc_r_precision(&aware.encoder, &quantized, &task.dev, SearchMode::Quantized)?
    );
    Ok(())
}

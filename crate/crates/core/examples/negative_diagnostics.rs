//! Train a query encoder on a two-signal synthetic task with in-batch
//! negatives alone and with in-passage negatives added, and compare the
//! topic and hard-negative diagnostics.

use gidx::synthetic::{TwoSignalConfig, TwoSignalTask};
use gidx::training::{l_hard, l_topic, train_contrastive, NegativeSources};
use gidx::{NegativeScheme, QueryEncoder, TrainConfig};

fn main() -> gidx::Result<()> {
    let task = TwoSignalTask::generate(TwoSignalConfig::default())?;
    let sources = NegativeSources {
        bm25: None,
        passages: Some(&task.passages),
    };
    let start = QueryEncoder::zeros(task.index.dim(), task.index.dim());
    let max_len = task.config.max_phrase_len;

    for schemes in [
        vec![NegativeScheme::InBatch],
        vec![NegativeScheme::InBatch, NegativeScheme::InPassage],
    ] {
        let cfg = TrainConfig {
            batch_size: Some(8),
            learning_rate: 0.5,
            epochs: 30,
            negative_schemes: schemes.iter().copied().collect(),
            ..TrainConfig::default()
        };
        let trained = train_contrastive(&start, &task.index, &task.train, &cfg, &sources)?;
        let topic = l_topic(&trained.encoder, &task.index, &task.dev, 9, 0)?;
        let hard = l_hard(
            &trained.encoder,
            &task.index,
            &task.dev,
            &task.passages,
            &task.encoder,
            max_len,
        )?;
        let names: Vec<&str> = schemes.iter().map(|s| s.as_str()).collect();
        println!(
            "{:<22} final loss {:.3}  l_topic {:.3}  l_hard {:.3}",
            names.join("+"),
            trained.loss_history.last().copied().unwrap_or(f64::NAN),
            topic.loss.unwrap_or(f64::NAN),
            hard.loss.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

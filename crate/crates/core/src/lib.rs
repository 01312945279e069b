//! Phrase-vector retrieval at three granularities.
//!
//! A corpus is cut into fixed-length passages, every short span becomes a
//! phrase vector, and passages or documents are scored by their best phrase.
//! Around that core sit a product quantizer (optionally rotated), BM25 for
//! mining hard negatives, contrastive and document-supervised training of a
//! linear query encoder, and the usual open-domain retrieval metrics.
//!
//! ```
//! use gidx::{build_index, Matrix, Phrase, SearchMode};
//!
//! let phrases: Vec<Phrase> = (0..3)
//!     .map(|i| Phrase {
//!         phrase_id: i,
//!         passage_id: format!("d{}#0", i / 2),
//!         doc_id: format!("d{}", i / 2),
//!         span: (0, 0),
//!         surface: format!("w{i}"),
//!         filter_score: 1.0,
//!     })
//!     .collect();
//! let vectors = Matrix::new(3, 2, vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0]).unwrap();
//! let index = build_index(phrases, vectors, 0.0).unwrap();
//! let hits = index.search_passages(&[1.0, 0.0], 2, SearchMode::Exact).unwrap();
//! assert_eq!(hits[0].unit_id, "d0#0");
//! ```

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod jsonl;
pub mod lexical;
pub mod matrix;
pub mod quantizer;
pub mod synthetic;
pub mod text;
pub mod training;

pub use corpus::{
    featurize, load_corpus, Corpus, Document, FeaturizerConfig, HashingFeaturizer, Passage, Phrase,
    PhraseEncoder,
};
pub use error::{GidxError, Result};
pub use eval::{Judgment, MetricsReport};
pub use index::{
    build_index, Granularity, Hit, IndexStats, PhraseIndex, RetrievalResult, SearchMode,
};
pub use lexical::Bm25Index;
pub use matrix::Matrix;
pub use quantizer::{train_opq, train_pq, QuantizerModel};
pub use training::{NegativeScheme, QueryEncoder, TrainConfig, TrainingExample};

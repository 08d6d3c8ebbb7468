//! Language models for second-pass N-best rescoring: modified Kneser-Ney
//! backoff models (also trainable from cutoff-filtered count releases),
//! deleted-interpolation count models, a joint word/tag class model, a
//! baseNP-reduced dependency parser model, and log-linear reranking with
//! simplex-based BLEU optimization.

pub mod chunkparse;
pub mod corpus;
pub mod countlm;
pub mod mert;
pub mod rerank;
pub mod scorer;
pub mod smoothing;
pub mod taglm;

pub use scorer::{ScoreError, SegmentScorer, SentenceScorer};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

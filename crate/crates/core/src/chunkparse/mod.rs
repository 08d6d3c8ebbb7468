//! BaseNP chunking, headword reduction, punctuation attachment rules and
//! the reduced-sentence parser language model.

pub mod basenp;
pub mod deps;
pub mod gap;
pub mod gold;
pub mod parser;

pub use basenp::{final_punctuation, is_nominal, tag_basenps, BaseNpAnalysis, BaseNpModel, ChunkInput, Rejection, Span};
pub use deps::{
    assign_punct_heads, distance_bucket, search_heads, DependencyAnalysis, Direction, Link, LinkEvents, LinkModel,
    PunctRule,
};
pub use gap::{is_valid_sequence, spans, GapTag};
pub use gold::{read_gold, train_basenp, train_linkmodel, GoldSentence, GoldToken};
pub use parser::{parse_tagged, ParseResult, ParserLm, DEFAULT_DEPENDENCY_BEAM};

#[derive(Debug, thiserror::Error)]
pub enum ChunkError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Normalization, vocabulary, N-gram counting and count files.

pub mod countfile;
pub mod counts;
pub mod normalize;
pub mod vocab;

pub use countfile::{read_count_file, write_count_file, CountFileError, ReadOptions, ReadReport};
pub use counts::{count_corpus, count_corpus_sharded, CountBuilder, CountSource, NGramCountTable, OrderCounts};
pub use normalize::{normalize, normalize_frozen, render, EmptyLine, NormalizationPolicy, TokenSequence};
pub use vocab::{TokenId, Vocabulary, BOS, BOS_ID, EOS, EOS_ID, NUMBER, NUMBER_ID, UNK, UNK_ID};

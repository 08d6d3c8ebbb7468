//! Modified Kneser-Ney training (including from incomplete count tables),
//! ARPA I/O, backoff queries and perplexity.

pub mod arpa;
pub mod coc;
pub mod kn;
pub mod model;
pub mod perplexity;

pub use arpa::{read_arpa, write_arpa, ArpaError};
pub use coc::{estimate_alpha, extrapolate_count_of_counts, law_points, AlphaFit, CocError, CocOrigin, CountOfCounts, Extrapolation};
pub use kn::{modified_kn_discounts, train_kn, KnConfig, KnError, ModelVocabulary, FALLBACK_DISCOUNTS};
pub use model::{BackoffModel, Discounts, ModelMetadata, NgramEntry, SmoothingKind};
pub use perplexity::{perplexity, OovMode, PerplexityError, PerplexityReport};

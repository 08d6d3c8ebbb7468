//! Joint word/structured-tag language model and component mixtures.

pub mod corpus;
pub mod mixture;
pub mod model;
pub mod tag;

pub use corpus::{TaggedCorpus, TAG_SEPARATOR};
pub use mixture::{fit_mixture_weights, mix_components, DynamicMixture, MixMode, MixtureEmConfig, MixtureError, StaticMixture};
pub use model::{train_joint, JointTagModel, TagLmError, TaggedScore, DEFAULT_BEAM};
pub use tag::{RoleTuple, StructuredTag, TagError, TagInventory};

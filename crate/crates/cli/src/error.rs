//! Failure classes and their exit statuses.

use std::fmt;
use std::io;
use std::path::Path;

use lmrescore::chunkparse::ChunkError;
use lmrescore::corpus::CountFileError;
use lmrescore::countlm::CountLmError;
use lmrescore::mert::{MertError, SegmentMismatch};
use lmrescore::rerank::RerankError;
use lmrescore::smoothing::{ArpaError, CocError, KnError, PerplexityError};
use lmrescore::taglm::{MixtureError, TagError, TagLmError};
use lmrescore::ScoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io,
    Usage,
    Format,
    Numerical,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Io => 1,
            Kind::Usage => 2,
            Kind::Format => 3,
            Kind::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new(Kind::Format, message)
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self::new(Kind::Numerical, message)
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        let kind = match e.kind() {
            io::ErrorKind::InvalidData | io::ErrorKind::UnexpectedEof => Kind::Format,
            _ => Kind::Io,
        };
        Self::new(kind, format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::new(Kind::Io, e.to_string())
    }
}

macro_rules! classify {
    ($ty:ty, |$e:ident| $kind:expr) => {
        impl From<$ty> for CliError {
            fn from($e: $ty) -> Self {
                let kind = $kind;
                CliError::new(kind, $e.to_string())
            }
        }
    };
}

classify!(ArpaError, |e| match e {
    ArpaError::Io(_) => Kind::Io,
    _ => Kind::Format,
});

classify!(CountFileError, |e| match e {
    CountFileError::Io { .. } => Kind::Io,
    CountFileError::TooManyRejections { .. } => Kind::Format,
    CountFileError::MissingOrder(_) => Kind::Usage,
});

classify!(KnError, |e| match e {
    KnError::DiscountUndefined { .. } | KnError::NegativeDiscount { .. } => Kind::Numerical,
    KnError::OverrideShape { .. } => Kind::Usage,
    KnError::NoUnigrams | KnError::VocabularyMismatch(_) => Kind::Format,
});

classify!(CocError, |e| match e {
    CocError::IllConditioned { .. } | CocError::InvalidAlpha(_) | CocError::Missing { .. } => Kind::Numerical,
    CocError::RangeTooShort => Kind::Usage,
    CocError::Parse { .. } => Kind::Format,
    CocError::Io(_) => Kind::Io,
});

classify!(CountLmError, |e| match e {
    CountLmError::BadBuckets => Kind::Usage,
    _ => Kind::Format,
});

classify!(TagError, |e| match e {
    TagError::Io(_) => Kind::Io,
    _ => Kind::Format,
});

classify!(TagLmError, |e| match e {
    TagLmError::OrderTooSmall(_) => Kind::Usage,
    TagLmError::Io { .. } => Kind::Io,
    TagLmError::Kn(KnError::DiscountUndefined { .. } | KnError::NegativeDiscount { .. }) => Kind::Numerical,
    TagLmError::Arpa(ArpaError::Io(_)) => Kind::Io,
    _ => Kind::Format,
});

classify!(ChunkError, |e| match e {
    ChunkError::Io(_) => Kind::Io,
    ChunkError::Format { .. } => Kind::Format,
});

classify!(MixtureError, |e| match e {
    MixtureError::Score(_) => Kind::Numerical,
    _ => Kind::Usage,
});

classify!(RerankError, |e| match e {
    RerankError::Io(_) => Kind::Io,
    RerankError::FeatureExists(_) => Kind::Usage,
    _ => Kind::Format,
});

classify!(MertError, |e| match e {
    MertError::UnknownFixed(_) | MertError::NoFreeWeights => Kind::Usage,
    MertError::Rerank(RerankError::Io(_)) => Kind::Io,
    _ => Kind::Format,
});

classify!(PerplexityError, |_e| Kind::Numerical);
classify!(ScoreError, |_e| Kind::Numerical);

impl From<SegmentMismatch> for CliError {
    fn from(e: SegmentMismatch) -> Self {
        CliError::format(format!("{} candidates for {} references", e.candidates, e.references))
    }
}

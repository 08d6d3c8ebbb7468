//! Tagged corpora: one sentence per line, tokens written `word|||tag-id`.

use std::io::{self, BufRead, Write};

use crate::corpus::{TokenId, Vocabulary, BOS, EOS};

use super::tag::{TagError, TagInventory};

pub const TAG_SEPARATOR: &str = "|||";

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedCorpus {
    pub vocab: Vocabulary,
    pub inventory: TagInventory,
    /// `(word, tag)` pairs per sentence; boundaries are implicit.
    pub sentences: Vec<Vec<(TokenId, usize)>>,
}

impl TaggedCorpus {
    pub fn new(inventory: TagInventory) -> Self {
        TaggedCorpus {
            vocab: Vocabulary::new(),
            inventory,
            sentences: Vec::new(),
        }
    }

    /// Adds a sentence of `(word, tag id)` pairs.
    pub fn push(&mut self, pairs: &[(&str, usize)]) -> Result<(), TagError> {
        let mut out = Vec::with_capacity(pairs.len());
        for &(w, t) in pairs {
            if self.inventory.get(t).is_none() {
                return Err(TagError::UnknownTag(t));
            }
            out.push((self.vocab.intern(w), t));
        }
        self.sentences.push(out);
        Ok(())
    }

    pub fn read<R: BufRead>(input: R, inventory: TagInventory) -> Result<Self, TagError> {
        let mut corpus = TaggedCorpus::new(inventory);
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let err = |msg: String| TagError::Parse { line: idx + 1, msg };
            let mut pairs = Vec::new();
            for tok in line.split_whitespace() {
                let (w, t) = tok
                    .rsplit_once(TAG_SEPARATOR)
                    .ok_or_else(|| err(format!("token {tok:?} lacks '{TAG_SEPARATOR}tag'")))?;
                if w.is_empty() || w == BOS || w == EOS {
                    return Err(err(format!("bad word in token {tok:?}")));
                }
                let t: usize = t.parse().map_err(|_| err(format!("bad tag id in {tok:?}")))?;
                pairs.push((w, t));
            }
            if pairs.is_empty() {
                continue;
            }
            corpus.push(&pairs).map_err(|e| err(e.to_string()))?;
        }
        Ok(corpus)
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in &self.sentences {
            let toks: Vec<String> = s
                .iter()
                .map(|&(w, t)| format!("{}{TAG_SEPARATOR}{t}", self.vocab.resolve(w)))
                .collect();
            writeln!(out, "{}", toks.join(" "))?;
        }
        out.flush()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.iter().all(Vec::is_empty)
    }
}

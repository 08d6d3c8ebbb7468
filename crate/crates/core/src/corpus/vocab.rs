use std::collections::HashMap;
use std::io::{self, BufRead, Write};

/// Dense token identifier.
pub type TokenId = u32;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const NUMBER: &str = "$number";

pub const BOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;
pub const NUMBER_ID: TokenId = 3;

const RESERVED: [&str; 4] = [BOS, EOS, UNK, NUMBER];

/// Bijection between tokens and dense ids.
///
/// The four reserved symbols always occupy ids 0..4. Looking up a token that
/// was never interned yields [`UNK_ID`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for tok in RESERVED {
            vocab.intern(tok);
        }
        vocab
    }

    /// Builds an open vocabulary from token frequencies: tokens seen fewer
    /// than `min_count` times are left out and will map to `<unk>`.
    /// Tokens are added in sorted order so ids are reproducible.
    pub fn from_frequencies<'a, I>(freqs: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut kept: Vec<&str> = freqs
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, _)| t)
            .collect();
        kept.sort_unstable();
        let mut vocab = Self::new();
        for tok in kept {
            vocab.intern(tok);
        }
        vocab
    }

    /// Returns the id for `token`, adding it if needed.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn lookup(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Like [`Vocabulary::token`], but panics on an id from another vocabulary.
    pub fn resolve(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_reserved(id: TokenId) -> bool {
        (id as usize) < RESERVED.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i as TokenId, t.as_str()))
    }

    /// Writes one token per line; line number minus one is the id.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> io::Result<Self> {
        let mut tokens = Vec::new();
        for line in input.lines() {
            tokens.push(line?);
        }
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "vocabulary file must start with <s>, </s>, <unk>, $number",
            ));
        }
        let mut vocab = Vocabulary {
            tokens: Vec::with_capacity(tokens.len()),
            ids: HashMap::with_capacity(tokens.len()),
        };
        for (lineno, tok) in tokens.iter().enumerate() {
            if vocab.ids.contains_key(tok) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("duplicate token {tok:?} on line {}", lineno + 1),
                ));
            }
            vocab.intern(tok);
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_symbols_come_first() {
        let v = Vocabulary::new();
        assert_eq!(v.lookup(BOS), BOS_ID);
        assert_eq!(v.lookup(EOS), EOS_ID);
        assert_eq!(v.lookup(UNK), UNK_ID);
        assert_eq!(v.lookup(NUMBER), NUMBER_ID);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn unseen_maps_to_unk() {
        let mut v = Vocabulary::new();
        let a = v.intern("a");
        assert_eq!(v.lookup("a"), a);
        assert_eq!(v.lookup("zzz"), UNK_ID);
        assert_eq!(v.resolve(a), "a");
    }

    #[test]
    fn singletons_are_dropped_by_default_threshold() {
        let v = Vocabulary::from_frequencies([("a", 3), ("b", 1), ("c", 2)], 2);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
        assert_eq!(v.lookup("b"), UNK_ID);
    }

    #[test]
    fn file_round_trip() {
        let mut v = Vocabulary::new();
        v.intern("x");
        v.intern("y");
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        let back = Vocabulary::read(&buf[..]).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn rejects_file_without_reserved_header() {
        assert!(Vocabulary::read(&b"a\nb\n"[..]).is_err());
    }
}

use super::vocab::{TokenId, Vocabulary, BOS, BOS_ID, EOS, EOS_ID, NUMBER, UNK};

/// Text normalization switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizationPolicy {
    pub lowercase: bool,
    pub map_numbers: bool,
    pub keep_punctuation: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy {
            lowercase: true,
            map_numbers: true,
            keep_punctuation: true,
        }
    }
}

/// A sequence of vocabulary ids, optionally wrapped in `<s> ... </s>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
    bounded: bool,
}

impl TokenSequence {
    /// Wraps real tokens with sentence boundary markers.
    pub fn bounded(words: &[TokenId]) -> Self {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(BOS_ID);
        ids.extend_from_slice(words);
        ids.push(EOS_ID);
        TokenSequence { ids, bounded: true }
    }

    pub fn unbounded(ids: Vec<TokenId>) -> Self {
        TokenSequence {
            ids,
            bounded: false,
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    /// Real tokens, without boundary markers.
    pub fn words(&self) -> &[TokenId] {
        if self.bounded {
            &self.ids[1..self.ids.len() - 1]
        } else {
            &self.ids
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Returned when a line normalizes to nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("line is empty after normalization")]
pub struct EmptyLine;

/// A token made of digits and numeric separators with at least one digit.
pub fn is_numeric(token: &str) -> bool {
    let mut has_digit = false;
    for c in token.chars() {
        if c.is_ascii_digit() {
            has_digit = true;
        } else if !matches!(c, '.' | ',' | ':' | '/' | '-' | '+' | '%') {
            return false;
        }
    }
    has_digit
}

/// A token made only of punctuation characters.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty()
        && token.chars().all(|c| {
            c.is_ascii_punctuation()
                || matches!(c, '\u{2018}'..='\u{201F}' | '\u{2026}' | '\u{00AB}' | '\u{00BB}')
        })
}

/// Splits and normalizes a raw line into token strings (no boundary markers).
pub fn normalize_tokens(raw_line: &str, policy: &NormalizationPolicy) -> Vec<String> {
    raw_line
        .split_whitespace()
        .filter(|tok| policy.keep_punctuation || !is_punctuation(tok))
        .map(|tok| {
            if policy.map_numbers && is_numeric(tok) {
                NUMBER.to_string()
            } else if policy.lowercase && !is_reserved_spelling(tok) {
                tok.to_lowercase()
            } else {
                tok.to_string()
            }
        })
        .collect()
}

fn is_reserved_spelling(tok: &str) -> bool {
    matches!(tok, BOS | EOS | UNK | NUMBER)
}

/// Normalizes `raw_line`, interning new tokens into `vocab`, and applies
/// boundary markers. Stray boundary markers in the input are dropped.
pub fn normalize(
    raw_line: &str,
    policy: &NormalizationPolicy,
    vocab: &mut Vocabulary,
) -> Result<TokenSequence, EmptyLine> {
    let ids: Vec<TokenId> = normalize_tokens(raw_line, policy)
        .iter()
        .filter(|t| !matches!(t.as_str(), BOS | EOS))
        .map(|t| vocab.intern(t))
        .collect();
    if ids.is_empty() {
        return Err(EmptyLine);
    }
    Ok(TokenSequence::bounded(&ids))
}

/// Like [`normalize`], but maps unseen tokens to `<unk>` instead of growing
/// the vocabulary.
pub fn normalize_frozen(
    raw_line: &str,
    policy: &NormalizationPolicy,
    vocab: &Vocabulary,
) -> Result<TokenSequence, EmptyLine> {
    let ids: Vec<TokenId> = normalize_tokens(raw_line, policy)
        .iter()
        .filter(|t| !matches!(t.as_str(), BOS | EOS))
        .map(|t| vocab.lookup(t))
        .collect();
    if ids.is_empty() {
        return Err(EmptyLine);
    }
    Ok(TokenSequence::bounded(&ids))
}

/// Renders the real tokens of a sequence as a space-joined line.
pub fn render(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    seq.words()
        .iter()
        .map(|&id| vocab.resolve(id))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::{NUMBER_ID, UNK_ID};
    use proptest::prelude::*;

    #[test]
    fn number_macro_example() {
        let mut v = Vocabulary::new();
        let seq = normalize(
            "It costs 25 dollars .",
            &NormalizationPolicy::default(),
            &mut v,
        )
        .unwrap();
        let toks: Vec<&str> = seq.ids().iter().map(|&i| v.resolve(i)).collect();
        assert_eq!(toks, ["<s>", "it", "costs", "$number", "dollars", ".", "</s>"]);
    }

    #[test]
    fn empty_line_is_signalled() {
        let mut v = Vocabulary::new();
        assert_eq!(
            normalize("", &NormalizationPolicy::default(), &mut v),
            Err(EmptyLine)
        );
        assert_eq!(
            normalize("   \t ", &NormalizationPolicy::default(), &mut v),
            Err(EmptyLine)
        );
    }

    #[test]
    fn repeated_numbers_share_macro_id() {
        let mut v = Vocabulary::new();
        let before = v.len();
        let seq = normalize("a 3.5 b 3.5 a", &NormalizationPolicy::default(), &mut v).unwrap();
        assert_eq!(seq.words()[1], NUMBER_ID);
        assert_eq!(seq.words()[3], NUMBER_ID);
        // $number is reserved, so only a and b are new; the three distinct
        // non-reserved entries that carry mass are {a, b, $number}.
        let distinct: std::collections::BTreeSet<_> = seq.words().iter().collect();
        assert_eq!(distinct.len(), 3);
        assert_eq!(v.len(), before + 2);
    }

    #[test]
    fn punctuation_can_be_dropped() {
        let policy = NormalizationPolicy {
            keep_punctuation: false,
            ..Default::default()
        };
        assert_eq!(normalize_tokens("Hi , there !", &policy), ["hi", "there"]);
    }

    #[test]
    fn frozen_normalization_uses_unk() {
        let mut v = Vocabulary::new();
        v.intern("a");
        let seq = normalize_frozen("a b", &NormalizationPolicy::default(), &v).unwrap();
        assert_eq!(seq.words()[1], UNK_ID);
    }

    #[test]
    fn numeric_detection() {
        assert!(is_numeric("25"));
        assert!(is_numeric("3.5"));
        assert!(is_numeric("1,000"));
        assert!(is_numeric("-4"));
        assert!(!is_numeric("a1"));
        assert!(!is_numeric("--"));
        assert!(!is_numeric("n.v."));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(line in "[A-Za-z0-9.,!? ]{0,40}") {
            let policy = NormalizationPolicy::default();
            let mut v = Vocabulary::new();
            if let Ok(first) = normalize(&line, &policy, &mut v) {
                let again = normalize(&render(&first, &v), &policy, &mut v).unwrap();
                prop_assert_eq!(first, again);
            }
        }
    }
}

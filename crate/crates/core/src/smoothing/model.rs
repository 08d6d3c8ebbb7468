use std::collections::HashMap;
use std::sync::Arc;

use crate::corpus::{TokenId, Vocabulary, BOS_ID, UNK_ID};
use crate::scorer::{ScoreError, SentenceScorer};

/// The conventional ARPA "log10 zero" used for `<s>`.
pub const LOG10_ZERO: f64 = -99.0;

/// Natural-log probability and optional natural-log backoff weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramEntry {
    pub logprob: f64,
    pub backoff: Option<f64>,
}

impl NgramEntry {
    /// An entry that exists only to carry a backoff weight, like `<s>`; its
    /// word is never predicted.
    pub fn context_only(backoff: Option<f64>) -> Self {
        NgramEntry {
            logprob: LOG10_ZERO * std::f64::consts::LN_10,
            backoff,
        }
    }

    pub fn is_context_only(&self) -> bool {
        self.logprob <= (LOG10_ZERO + 1e-6) * std::f64::consts::LN_10
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3_plus: f64,
}

impl Discounts {
    /// Discount applied to an (adjusted) count.
    pub fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3_plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingKind {
    /// Modified Kneser-Ney with continuation counts below the top order.
    ModifiedKn,
    /// Modified Kneser-Ney discounts on raw counts at every order, used for
    /// external tables where continuation counts cannot be derived.
    KnFromCounts,
    /// Read from an ARPA file.
    Loaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetadata {
    pub kind: SmoothingKind,
    /// Discounts per order, index 0 = unigrams.
    pub discounts: Vec<Discounts>,
    /// Contexts whose backoff weight was raised to the configured floor.
    pub clamped_backoffs: usize,
    /// Context entries added because a cutoff table lacked them.
    pub synthesized_contexts: usize,
}

impl ModelMetadata {
    pub fn loaded() -> Self {
        ModelMetadata {
            kind: SmoothingKind::Loaded,
            discounts: Vec::new(),
            clamped_backoffs: 0,
            synthesized_contexts: 0,
        }
    }
}

/// Backoff N-gram model with per-order probability and backoff tables.
/// Immutable once trained or loaded; safe to share between threads.
#[derive(Debug, Clone)]
pub struct BackoffModel {
    vocab: Arc<Vocabulary>,
    orders: Vec<HashMap<Box<[TokenId]>, NgramEntry>>,
    metadata: ModelMetadata,
}

impl BackoffModel {
    pub fn new(vocab: Arc<Vocabulary>, max_order: usize, metadata: ModelMetadata) -> Self {
        assert!(max_order >= 1);
        BackoffModel {
            vocab,
            orders: vec![HashMap::new(); max_order],
            metadata,
        }
    }

    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn shared_vocab(&self) -> Arc<Vocabulary> {
        Arc::clone(&self.vocab)
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub(crate) fn metadata_mut(&mut self) -> &mut ModelMetadata {
        &mut self.metadata
    }

    pub fn insert(&mut self, gram: &[TokenId], entry: NgramEntry) {
        self.orders[gram.len() - 1].insert(gram.into(), entry);
    }

    pub fn entry(&self, gram: &[TokenId]) -> Option<&NgramEntry> {
        if gram.is_empty() || gram.len() > self.max_order() {
            return None;
        }
        self.orders[gram.len() - 1].get(gram)
    }

    pub(crate) fn entry_mut(&mut self, gram: &[TokenId]) -> Option<&mut NgramEntry> {
        self.orders[gram.len() - 1].get_mut(gram)
    }

    /// The same model over another vocabulary. Panics if `vocab` lacks a
    /// token this model uses.
    pub fn rebase(&self, vocab: Arc<Vocabulary>) -> BackoffModel {
        let map = |id: TokenId| {
            let tok = self.vocab.resolve(id);
            vocab.get(tok).unwrap_or_else(|| panic!("token {tok:?} missing from target vocabulary"))
        };
        let orders = self
            .orders
            .iter()
            .map(|m| m.iter().map(|(g, e)| (g.iter().map(|&id| map(id)).collect(), *e)).collect())
            .collect();
        BackoffModel {
            vocab,
            orders,
            metadata: self.metadata.clone(),
        }
    }

    pub fn order_len(&self, k: usize) -> usize {
        self.orders[k - 1].len()
    }

    pub fn order_entries(&self, k: usize) -> impl Iterator<Item = (&[TokenId], &NgramEntry)> {
        self.orders[k - 1].iter().map(|(g, e)| (&**g, e))
    }

    /// Whether `word` is a predictable unigram.
    pub fn in_vocab(&self, word: TokenId) -> bool {
        word != BOS_ID && self.orders[0].get(&[word][..]).is_some_and(|e| !e.is_context_only())
    }

    /// Predictable words (every unigram but `<s>` and other context-only
    /// symbols), sorted by id.
    pub fn predictable(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = self.orders[0]
            .iter()
            .filter(|(g, e)| g[0] != BOS_ID && !e.is_context_only())
            .map(|(g, _)| g[0])
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Maps an id to itself if predictable, else to `<unk>` if the model has it.
    pub fn map_word(&self, word: TokenId) -> Option<TokenId> {
        if self.in_vocab(word) {
            Some(word)
        } else if self.in_vocab(UNK_ID) {
            Some(UNK_ID)
        } else {
            None
        }
    }

    /// Natural-log P(word | context) by standard backoff: the longest stored
    /// (context suffix, word) entry, plus the backoff weights of every longer
    /// context that was skipped. Only the last n-1 context ids are used.
    pub fn logprob(&self, context: &[TokenId], word: TokenId) -> f64 {
        let Some(word) = self.map_word(word) else {
            return f64::NEG_INFINITY;
        };
        let n = self.max_order();
        let ctx = &context[context.len().saturating_sub(n - 1)..];
        let mut key: Vec<TokenId> = Vec::with_capacity(ctx.len() + 1);
        let mut backoff = 0.0;
        for start in 0..=ctx.len() {
            let hist = &ctx[start..];
            key.clear();
            key.extend_from_slice(hist);
            key.push(word);
            if let Some(e) = self.orders[hist.len()].get(key.as_slice()) {
                return backoff + e.logprob;
            }
            if !hist.is_empty() {
                if let Some(b) = self.orders[hist.len() - 1].get(hist).and_then(|e| e.backoff) {
                    backoff += b;
                }
            }
        }
        f64::NEG_INFINITY
    }

    /// Per-token natural-log probabilities of `<s> words </s>`.
    pub fn sequence_logprobs(&self, words: &[TokenId]) -> Vec<f64> {
        let mut history = Vec::with_capacity(words.len() + 1);
        history.push(BOS_ID);
        let mut out = Vec::with_capacity(words.len() + 1);
        for &w in words.iter().chain(std::iter::once(&crate::corpus::EOS_ID)) {
            out.push(self.logprob(&history, w));
            history.push(self.map_word(w).unwrap_or(w));
        }
        out
    }
}

impl SentenceScorer for BackoffModel {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        let ids: Vec<TokenId> = words.iter().map(|w| self.vocab.lookup(w)).collect();
        Ok(self.sequence_logprobs(&ids))
    }

    fn is_oov(&self, word: &str) -> bool {
        !self.vocab.get(word).is_some_and(|id| self.in_vocab(id))
    }
}

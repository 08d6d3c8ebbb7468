//! Interpolated modified Kneser-Ney training into a backoff model.
//!
//! For a context `h` with adjusted counts `a(h, w)` summing to `S(h)`:
//!
//! ```text
//! P(w | h) = (a(h, w) - D(a)) / S(h) + gamma(h) * P(w | h')
//! gamma(h) = sum_w D(a(h, w)) / S(h)
//! ```
//!
//! where `h'` drops the oldest word and the unigram level interpolates with
//! the uniform distribution over the model vocabulary. Adjusted counts are raw
//! counts at the top order and continuation counts `N1+(. g)` below it, except
//! for grams starting with `<s>`, which have no left extension and keep their
//! raw counts. Tables flagged external use raw counts throughout.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::corpus::{CountSource, NGramCountTable, OrderCounts, TokenId, Vocabulary, BOS_ID, EOS_ID, UNK_ID};

use super::coc::CountOfCounts;
use super::model::{BackoffModel, Discounts, ModelMetadata, NgramEntry, SmoothingKind};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelVocabulary {
    /// Every unigram in the counts plus `</s>`, and `<unk>` when `open`.
    FromCounts { open: bool },
    /// A fixed set of predictable ids; must cover every unigram in the counts.
    Explicit(Vec<TokenId>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnConfig {
    pub vocabulary: ModelVocabulary,
    /// Discounts to use when the counts-of-counts cannot define them.
    /// `None` turns that situation into an error.
    pub discount_fallback: Option<Discounts>,
    /// Lower bound on a context's backoff weight, in probability space.
    pub backoff_floor: f64,
}

impl Default for KnConfig {
    fn default() -> Self {
        KnConfig {
            vocabulary: ModelVocabulary::FromCounts { open: true },
            discount_fallback: None,
            backoff_floor: 1e-10,
        }
    }
}

/// Fallback discounts used for sparse auxiliary models.
pub const FALLBACK_DISCOUNTS: Discounts = Discounts {
    d1: 0.5,
    d2: 1.0,
    d3_plus: 1.5,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KnError {
    #[error("order {order}: discounts undefined because F(1) = {f1} and F(2) = {f2}")]
    DiscountUndefined { order: usize, f1: f64, f2: f64 },
    #[error("order {order}: negative discount {discounts:?}")]
    NegativeDiscount { order: usize, discounts: Discounts },
    #[error("counts-of-counts override has {given} orders, model has {needed}")]
    OverrideShape { given: usize, needed: usize },
    #[error("no unigram counts to train from")]
    NoUnigrams,
    #[error("token id {0} occurs in the counts but not in the explicit model vocabulary")]
    VocabularyMismatch(TokenId),
}

/// Modified KN discounts from F(1..4):
/// `Y = F1 / (F1 + 2 F2)`, `D1 = 1 - 2Y F2/F1`, `D2 = 2 - 3Y F3/F2`,
/// `D3+ = 3 - 4Y F4/F3` (with `F4/F3` taken as 0 when F3 = 0; no count in
/// that bracket exists then, so the value is never used).
pub fn modified_kn_discounts(
    coc: &CountOfCounts,
    order: usize,
    fallback: Option<Discounts>,
) -> Result<Discounts, KnError> {
    let f = |c| coc.frequency(c);
    let (f1, f2, f3, f4) = (f(1), f(2), f(3), f(4));
    if f1 <= 0.0 || f2 <= 0.0 {
        return fallback.ok_or(KnError::DiscountUndefined { order, f1, f2 });
    }
    let y = f1 / (f1 + 2.0 * f2);
    let ratio43 = if f3 > 0.0 { f4 / f3 } else { 0.0 };
    let discounts = Discounts {
        d1: 1.0 - 2.0 * y * f2 / f1,
        d2: 2.0 - 3.0 * y * f3 / f2,
        d3_plus: 3.0 - 4.0 * y * ratio43,
    };
    if discounts.d1 < 0.0 || discounts.d2 < 0.0 || discounts.d3_plus < 0.0 {
        return fallback.ok_or(KnError::NegativeDiscount { order, discounts });
    }
    Ok(discounts)
}

/// Adjusted counts for every entry of every order, index-aligned with the
/// table's `OrderCounts`.
fn adjusted_counts(counts: &NGramCountTable) -> Vec<Vec<u64>> {
    let n = counts.max_order();
    let raw = |oc: &OrderCounts| (0..oc.len()).map(|i| oc.count_at(i)).collect::<Vec<_>>();
    if counts.source() == CountSource::External {
        return counts.orders().iter().map(raw).collect();
    }
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let oc = counts.order(k);
        if k == n {
            out.push(raw(oc));
            continue;
        }
        let mut continuation: HashMap<&[TokenId], u64> = HashMap::new();
        for (gram, _) in counts.order(k + 1).iter() {
            *continuation.entry(&gram[1..]).or_insert(0) += 1;
        }
        out.push(
            oc.iter()
                .map(|(gram, c)| {
                    if gram[0] == BOS_ID {
                        c
                    } else {
                        continuation.get(gram).copied().unwrap_or(0)
                    }
                })
                .collect(),
        );
    }
    out
}

/// Grams that can be predicted: `<s>` may only open a gram and is never the
/// predicted word.
fn usable(gram: &[TokenId]) -> bool {
    gram.iter().skip(1).all(|&id| id != BOS_ID) && !(gram.len() == 1 && gram[0] == BOS_ID)
}

/// Trains an interpolated modified-KN backoff model.
///
/// `coc_override`, when given, supplies the counts-of-counts for every order
/// (index 0 = unigrams) instead of tallying them from the table; this is how
/// extrapolated singleton frequencies enter training.
pub fn train_kn(
    counts: &NGramCountTable,
    vocab: Arc<Vocabulary>,
    coc_override: Option<&[CountOfCounts]>,
    config: &KnConfig,
) -> Result<BackoffModel, KnError> {
    let n = counts.max_order();
    if let Some(ov) = coc_override {
        if ov.len() != n {
            return Err(KnError::OverrideShape {
                given: ov.len(),
                needed: n,
            });
        }
    }
    let adjusted = adjusted_counts(counts);

    let mut discounts = Vec::with_capacity(n);
    for k in 1..=n {
        let coc = match coc_override {
            Some(ov) => ov[k - 1].clone(),
            None => {
                let oc = counts.order(k);
                CountOfCounts::from_counts(
                    k,
                    (0..oc.len())
                        .filter(|&i| usable(oc.gram(i)))
                        .map(|i| adjusted[k - 1][i]),
                )
            }
        };
        discounts.push(modified_kn_discounts(&coc, k, config.discount_fallback)?);
    }

    let unigrams = counts.order(1);
    let mut vocab_set: BTreeSet<TokenId> = match &config.vocabulary {
        ModelVocabulary::FromCounts { open } => {
            let mut set: BTreeSet<TokenId> = unigrams
                .iter()
                .map(|(g, _)| g[0])
                .filter(|&id| id != BOS_ID)
                .collect();
            set.insert(EOS_ID);
            if *open {
                set.insert(UNK_ID);
            }
            set
        }
        ModelVocabulary::Explicit(ids) => {
            let set: BTreeSet<TokenId> = ids.iter().copied().filter(|&id| id != BOS_ID).collect();
            if let Some((g, _)) = unigrams.iter().find(|(g, _)| g[0] != BOS_ID && !set.contains(&g[0])) {
                return Err(KnError::VocabularyMismatch(g[0]));
            }
            set
        }
    };
    if vocab_set.is_empty() {
        return Err(KnError::NoUnigrams);
    }
    vocab_set.remove(&BOS_ID);

    let kind = if counts.source() == CountSource::External {
        SmoothingKind::KnFromCounts
    } else {
        SmoothingKind::ModifiedKn
    };
    let mut model = BackoffModel::new(
        vocab,
        n,
        ModelMetadata {
            kind,
            discounts: discounts.clone(),
            clamped_backoffs: 0,
            synthesized_contexts: 0,
        },
    );

    // Unigrams, interpolated with the uniform distribution.
    let uni_adjusted: HashMap<TokenId, u64> = unigrams
        .iter()
        .enumerate()
        .filter(|(_, (g, _))| g[0] != BOS_ID)
        .map(|(i, (g, _))| (g[0], adjusted[0][i]))
        .collect();
    let total: u64 = uni_adjusted.values().sum();
    let uniform = 1.0 / vocab_set.len() as f64;
    let mut clamped = 0;
    if total == 0 {
        for &w in &vocab_set {
            model.insert(&[w], entry(uniform.ln()));
        }
    } else {
        let s = total as f64;
        let d = &discounts[0];
        let mut removed = 0.0;
        let mut kept: Vec<(TokenId, f64)> = Vec::with_capacity(vocab_set.len());
        for &w in &vocab_set {
            let a = uni_adjusted.get(&w).copied().unwrap_or(0);
            let disc = d.for_count(a).min(a as f64);
            removed += disc;
            kept.push((w, (a as f64 - disc) / s));
        }
        let mut gamma = removed / s;
        if gamma < config.backoff_floor {
            gamma = config.backoff_floor;
            clamped += 1;
        }
        for (w, p) in kept {
            model.insert(&[w], entry((p + gamma * uniform).ln()));
        }
    }
    model.insert(&[BOS_ID], NgramEntry::context_only(None));

    let mut synthesized = 0;
    for k in 2..=n {
        let oc = counts.order(k);
        let d = discounts[k - 1];
        let mut i = 0;
        while i < oc.len() {
            let context: Vec<TokenId> = oc.gram(i)[..k - 1].to_vec();
            let mut j = i;
            let mut group: Vec<(TokenId, u64)> = Vec::new();
            while j < oc.len() && oc.gram(j)[..k - 1] == context[..] {
                let gram = oc.gram(j);
                if usable(gram) {
                    group.push((gram[k - 1], adjusted[k - 1][j]));
                }
                j += 1;
            }
            i = j;
            if group.is_empty() {
                continue;
            }
            for &(w, _) in &group {
                if !vocab_set.contains(&w) {
                    return Err(KnError::VocabularyMismatch(w));
                }
            }
            let s: u64 = group.iter().map(|&(_, a)| a).sum();
            if s == 0 {
                continue;
            }
            let s = s as f64;
            let removed: f64 = group
                .iter()
                .map(|&(_, a)| d.for_count(a).min(a as f64))
                .sum();
            let mut gamma = removed / s;
            if gamma < config.backoff_floor {
                gamma = config.backoff_floor;
                clamped += 1;
            }
            let lower_ctx = &context[1..];
            let mut new_entries = Vec::with_capacity(group.len());
            for &(w, a) in &group {
                let disc = d.for_count(a).min(a as f64);
                let lower = model.logprob(lower_ctx, w).exp();
                let p = (a as f64 - disc) / s + gamma * lower;
                new_entries.push((w, p.ln()));
            }
            let mut gram = context.clone();
            for (w, lp) in new_entries {
                gram.push(w);
                model.insert(&gram, entry(lp));
                gram.pop();
            }
            match model.entry_mut(&context) {
                Some(e) => e.backoff = Some(gamma.ln()),
                None => {
                    let last = context[k - 2];
                    let synthesized_entry = if vocab_set.contains(&last) {
                        NgramEntry {
                            logprob: model.logprob(&context[..k - 2], last),
                            backoff: Some(gamma.ln()),
                        }
                    } else {
                        NgramEntry::context_only(Some(gamma.ln()))
                    };
                    model.insert(&context, synthesized_entry);
                    synthesized += 1;
                }
            }
        }
    }
    let meta = model.metadata_mut();
    meta.clamped_backoffs = clamped;
    meta.synthesized_contexts = synthesized;
    if clamped > 0 {
        log::warn!("{clamped} backoff weights clamped to {}", config.backoff_floor);
    }
    Ok(model)
}

fn entry(logprob: f64) -> NgramEntry {
    NgramEntry {
        logprob,
        backoff: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_corpus, TokenSequence};

    fn toy() -> (Arc<Vocabulary>, NGramCountTable) {
        let mut v = Vocabulary::new();
        let a = v.intern("a");
        let b = v.intern("b");
        let c = v.intern("c");
        let seqs = [
            TokenSequence::bounded(&[a, b]),
            TokenSequence::bounded(&[a, b]),
            TokenSequence::bounded(&[a, c]),
        ];
        (Arc::new(v), count_corpus(&seqs, 2))
    }

    #[test]
    fn continuation_counts_below_top_order() {
        let (v, t) = toy();
        let adj = adjusted_counts(&t);
        let uni = t.order(1);
        let eos = uni.iter().position(|(g, _)| g[0] == EOS_ID).unwrap();
        // </s> follows b and c.
        assert_eq!(adj[0][eos], 2);
        let a = uni.iter().position(|(g, _)| g[0] == v.lookup("a")).unwrap();
        assert_eq!(adj[0][a], 1);
    }

    #[test]
    fn discount_formulas() {
        let mut coc = CountOfCounts::new(2);
        coc.set_observed(1, 2.0);
        coc.set_observed(2, 2.0);
        coc.set_observed(3, 1.0);
        let d = modified_kn_discounts(&coc, 2, None).unwrap();
        assert!((d.d1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.d2 - 1.5).abs() < 1e-15);
        assert!((d.d3_plus - 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_singletons_are_an_error() {
        let mut coc = CountOfCounts::new(3);
        coc.set_observed(2, 10.0);
        coc.set_observed(3, 5.0);
        assert_eq!(
            modified_kn_discounts(&coc, 3, None),
            Err(KnError::DiscountUndefined { order: 3, f1: 0.0, f2: 10.0 })
        );
        assert_eq!(modified_kn_discounts(&coc, 3, Some(FALLBACK_DISCOUNTS)), Ok(FALLBACK_DISCOUNTS));
    }

    #[test]
    fn negative_discount_is_an_error() {
        let mut coc = CountOfCounts::new(1);
        coc.set_observed(1, 10.0);
        coc.set_observed(2, 1.0);
        coc.set_observed(3, 100.0);
        assert!(matches!(
            modified_kn_discounts(&coc, 1, None),
            Err(KnError::NegativeDiscount { order: 1, .. })
        ));
    }

    #[test]
    fn direct_hit_returns_stored_value() {
        let (v, t) = toy();
        let m = train_kn(&t, v.clone(), None, &KnConfig::default()).unwrap();
        let a = v.lookup("a");
        let b = v.lookup("b");
        let stored = m.entry(&[a, b]).unwrap().logprob;
        assert_eq!(m.logprob(&[BOS_ID, a], b), stored);
        assert_eq!(m.metadata().kind, SmoothingKind::ModifiedKn);
    }

    #[test]
    fn explicit_vocabulary_must_cover_counts() {
        let (v, t) = toy();
        let cfg = KnConfig {
            vocabulary: ModelVocabulary::Explicit(vec![EOS_ID, v.lookup("a")]),
            ..Default::default()
        };
        assert!(matches!(train_kn(&t, v, None, &cfg), Err(KnError::VocabularyMismatch(_))));
    }
}

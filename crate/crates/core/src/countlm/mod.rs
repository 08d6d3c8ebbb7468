//! Jelinek-Mercer interpolated LM computed directly from count tables.
//!
//! For a history `h` whose longest usable suffix has length `m - 1`:
//!
//! ```text
//! P(w | h) = sum_{k=1..m} lambda_k * c(h_k, w) / S(h_k) + lambda_0 / |V|
//! ```
//!
//! where `h_k` is the last `k - 1` ids of `h` and `S(h_k)` is the sum of the
//! order-`k` counts sharing that history. Orders whose `S` is zero drop out
//! and their weight is spread proportionally over the rest, so every
//! conditional distribution sums to one even over cutoff tables. The weight
//! vector is picked by `m` and by the bucket of `S(h_m)`.

mod em;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead, Write};
use std::sync::{Arc, Mutex};

use crate::corpus::{NGramCountTable, TokenId, Vocabulary, BOS_ID, EOS_ID, UNK_ID};
use crate::scorer::{ScoreError, SentenceScorer};

pub use em::{estimate_jm_weights, EmConfig, EmReport};

/// Lower bounds of the history-count buckets; the last bucket is open-ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buckets(Vec<u64>);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CountLmError {
    #[error("bucket bounds must start at 0 and increase strictly")]
    BadBuckets,
    #[error("interpolation weights for order {order} bucket {bucket} are not a distribution")]
    BadWeights { order: usize, bucket: usize },
    #[error("weights cover {found} orders, model has {needed}")]
    WeightShape { found: usize, needed: usize },
    #[error("held-out data has no predicted tokens")]
    EmptyHeldOut,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Buckets {
    pub fn new(lower_bounds: Vec<u64>) -> Result<Self, CountLmError> {
        if lower_bounds.first() != Some(&0) || lower_bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CountLmError::BadBuckets);
        }
        Ok(Buckets(lower_bounds))
    }

    /// A single bucket covering every count.
    pub fn single() -> Self {
        Buckets(vec![0])
    }

    pub fn lower_bounds(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index(&self, count: u64) -> usize {
        self.0.partition_point(|&b| b <= count) - 1
    }
}

impl Default for Buckets {
    fn default() -> Self {
        Buckets(vec![0, 1, 2, 4, 8, 16, 64, 256])
    }
}

/// Interpolation weights: for each effective order `m` (1..=n) and bucket, a
/// vector `lambda[0..=m]` indexed by order (index 0 is the uniform floor).
#[derive(Debug, Clone, PartialEq)]
pub struct JmWeights {
    buckets: Buckets,
    table: Vec<Vec<Vec<f64>>>,
}

impl JmWeights {
    /// Equal weight on every order.
    pub fn uniform(n: usize, buckets: Buckets) -> Self {
        let table = (1..=n)
            .map(|m| vec![vec![1.0 / (m + 1) as f64; m + 1]; buckets.len()])
            .collect();
        JmWeights { buckets, table }
    }

    /// The same per-order weights in every bucket; `lambda[k]` is the weight
    /// of order `k`, `lambda[0]` the uniform floor. Lower effective orders use
    /// the renormalized prefix.
    pub fn fixed(lambda: &[f64], buckets: Buckets) -> Result<Self, CountLmError> {
        let n = lambda.len().saturating_sub(1);
        let mut table = Vec::with_capacity(n);
        for m in 1..=n {
            let z: f64 = lambda[..=m].iter().sum();
            let v: Vec<f64> = lambda[..=m].iter().map(|l| l / z).collect();
            table.push(vec![v; buckets.len()]);
        }
        let w = JmWeights { buckets, table };
        w.validate()?;
        Ok(w)
    }

    pub fn max_order(&self) -> usize {
        self.table.len()
    }

    pub fn buckets(&self) -> &Buckets {
        &self.buckets
    }

    pub fn get(&self, order: usize, bucket: usize) -> &[f64] {
        &self.table[order - 1][bucket]
    }

    pub(crate) fn set(&mut self, order: usize, bucket: usize, lambda: Vec<f64>) {
        self.table[order - 1][bucket] = lambda;
    }

    pub fn validate(&self) -> Result<(), CountLmError> {
        if self.table.is_empty() {
            return Err(CountLmError::WeightShape { found: 0, needed: 1 });
        }
        for (i, per_bucket) in self.table.iter().enumerate() {
            for (b, v) in per_bucket.iter().enumerate() {
                let ok = v.len() == i + 2
                    && v.iter().all(|&l| l >= 0.0 && l.is_finite())
                    && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9
                    && v[0] > 0.0;
                if !ok {
                    return Err(CountLmError::BadWeights { order: i + 1, bucket: b });
                }
            }
        }
        Ok(())
    }

    /// `order TAB bucket_lower TAB lambda_order ... lambda_0`, one line per
    /// (order, bucket).
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, per_bucket) in self.table.iter().enumerate() {
            for (b, v) in per_bucket.iter().enumerate() {
                let lambdas: Vec<String> = v.iter().rev().map(|l| l.to_string()).collect();
                writeln!(out, "{}\t{}\t{}", i + 1, self.buckets.0[b], lambdas.join("\t"))?;
            }
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, CountLmError> {
        let mut rows: Vec<(usize, u64, Vec<f64>)> = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let err = |msg: &str| CountLmError::Parse {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let line = line.map_err(|e| err(&e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 4 {
                return Err(err("expected order, bucket bound and at least two weights"));
            }
            let order: usize = fields[0].parse().map_err(|_| err("bad order"))?;
            let lower: u64 = fields[1].parse().map_err(|_| err("bad bucket bound"))?;
            let mut v = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| err("bad weight")))
                .collect::<Result<Vec<f64>, _>>()?;
            if order == 0 || v.len() != order + 1 {
                return Err(err("weight count does not match order"));
            }
            v.reverse();
            rows.push((order, lower, v));
        }
        let bounds: BTreeSet<u64> = rows.iter().map(|r| r.1).collect();
        let buckets = Buckets::new(bounds.into_iter().collect())?;
        let n = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let mut table: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; buckets.len()]; n];
        for (order, lower, v) in rows {
            let b = buckets.index(lower);
            table[order - 1][b] = Some(v);
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(i, per_bucket)| {
                per_bucket
                    .into_iter()
                    .enumerate()
                    .map(|(b, v)| v.ok_or(CountLmError::BadWeights { order: i + 1, bucket: b }))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let w = JmWeights { buckets, table };
        w.validate()?;
        Ok(w)
    }
}

/// The per-order probability terms of one prediction, before weighting.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Components {
    /// Effective order `m`.
    pub order: usize,
    pub bucket: usize,
    /// `rel[k]` for k in 0..=m; `None` where the history total is zero.
    pub rel: Vec<Option<f64>>,
}

impl Components {
    pub fn mix(&self, lambda: &[f64]) -> f64 {
        let (mut num, mut z) = (0.0, 0.0);
        for (l, r) in lambda.iter().zip(&self.rel) {
            if let Some(p) = r {
                num += l * p;
                z += l;
            }
        }
        num / z
    }
}

pub struct CountLm {
    counts: Arc<NGramCountTable>,
    vocab: Arc<Vocabulary>,
    /// Per order k >= 2: sum of counts sharing each (k-1)-id history.
    history_totals: Vec<HashMap<Box<[TokenId]>, u64>>,
    unigram_total: u64,
    predictable: HashSet<TokenId>,
    weights: JmWeights,
    trace: Option<Mutex<HashSet<Vec<TokenId>>>>,
}

impl std::fmt::Debug for CountLm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CountLm")
            .field("max_order", &self.max_order())
            .field("vocab_size", &self.vocab_size())
            .finish()
    }
}

impl CountLm {
    pub fn new(counts: Arc<NGramCountTable>, vocab: Arc<Vocabulary>, weights: JmWeights) -> Result<Self, CountLmError> {
        weights.validate()?;
        let n = counts.max_order();
        if weights.max_order() != n {
            return Err(CountLmError::WeightShape {
                found: weights.max_order(),
                needed: n,
            });
        }
        let mut predictable: HashSet<TokenId> = [EOS_ID, UNK_ID].into_iter().collect();
        let mut history_totals = Vec::with_capacity(n.saturating_sub(1));
        for k in 1..=n {
            let oc = counts.order(k);
            predictable.extend(oc.iter().map(|(g, _)| g[k - 1]));
            if k >= 2 {
                let mut totals: HashMap<Box<[TokenId]>, u64> = HashMap::new();
                for (g, c) in oc.iter() {
                    *totals.entry(g[..k - 1].into()).or_default() += c;
                }
                history_totals.push(totals);
            }
        }
        predictable.remove(&BOS_ID);
        Ok(CountLm {
            unigram_total: counts.order(1).total(),
            counts,
            vocab,
            history_totals,
            predictable,
            weights,
            trace: None,
        })
    }

    /// Records every N-gram looked up from here on; see [`CountLm::accessed`].
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Mutex::new(HashSet::new()));
        self
    }

    /// N-grams (count keys and history keys) touched since tracing began.
    pub fn accessed(&self) -> Vec<Vec<TokenId>> {
        let mut v: Vec<Vec<TokenId>> = match &self.trace {
            Some(t) => t.lock().expect("trace lock").iter().cloned().collect(),
            None => Vec::new(),
        };
        v.sort();
        v
    }

    fn touch(&self, gram: &[TokenId]) {
        if let Some(t) = &self.trace {
            t.lock().expect("trace lock").insert(gram.to_vec());
        }
    }

    pub fn max_order(&self) -> usize {
        self.counts.max_order()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn weights(&self) -> &JmWeights {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: JmWeights) -> Result<(), CountLmError> {
        weights.validate()?;
        if weights.max_order() != self.max_order() {
            return Err(CountLmError::WeightShape {
                found: weights.max_order(),
                needed: self.max_order(),
            });
        }
        self.weights = weights;
        Ok(())
    }

    /// Size of the predictable vocabulary: every id ending a stored N-gram,
    /// plus `</s>` and `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.predictable.len()
    }

    /// Predictable ids, sorted.
    pub fn predictable(&self) -> Vec<TokenId> {
        let mut v: Vec<TokenId> = self.predictable.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn map_word(&self, word: TokenId) -> TokenId {
        if self.predictable.contains(&word) {
            word
        } else {
            UNK_ID
        }
    }

    fn history_total(&self, history: &[TokenId]) -> u64 {
        if history.is_empty() {
            return self.unigram_total;
        }
        self.touch(history);
        self.history_totals[history.len() - 1].get(history).copied().unwrap_or(0)
    }

    pub(crate) fn components(&self, context: &[TokenId], word: TokenId) -> Components {
        let word = self.map_word(word);
        let n = self.max_order();
        let ctx = &context[context.len().saturating_sub(n - 1)..];
        let m = ctx.len() + 1;
        let mut rel = vec![None; m + 1];
        rel[0] = Some(1.0 / self.vocab_size() as f64);
        let mut key: Vec<TokenId> = Vec::with_capacity(m);
        let mut top_total = 0;
        for k in 1..=m {
            let hist = &ctx[ctx.len() + 1 - k..];
            let total = self.history_total(hist);
            if k == m {
                top_total = total;
            }
            if total == 0 {
                continue;
            }
            key.clear();
            key.extend_from_slice(hist);
            key.push(word);
            self.touch(&key);
            let c = self.counts.order(k).get(&key).unwrap_or(0);
            rel[k] = Some(c as f64 / total as f64);
        }
        Components {
            order: m,
            bucket: self.weights.buckets.index(top_total),
            rel,
        }
    }

    /// Natural-log P(word | context); only the last n-1 context ids are used.
    pub fn logprob(&self, context: &[TokenId], word: TokenId) -> f64 {
        let comp = self.components(context, word);
        comp.mix(self.weights.get(comp.order, comp.bucket)).ln()
    }

    /// Per-token natural-log probabilities of `<s> words </s>`.
    pub fn sequence_logprobs(&self, words: &[TokenId]) -> Vec<f64> {
        let mut history = Vec::with_capacity(words.len() + 1);
        history.push(BOS_ID);
        let mut out = Vec::with_capacity(words.len() + 1);
        for &w in words.iter().chain(std::iter::once(&EOS_ID)) {
            out.push(self.logprob(&history, w));
            history.push(self.map_word(w));
        }
        out
    }
}

impl SentenceScorer for CountLm {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        let ids: Vec<TokenId> = words.iter().map(|w| self.vocab.lookup(w)).collect();
        Ok(self.sequence_logprobs(&ids))
    }

    fn is_oov(&self, word: &str) -> bool {
        !self.predictable.contains(&self.vocab.lookup(word))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CountSource, OrderCounts};

    /// Bigram `a b` seen 3 times, `a c` once; unigram `b` 5 of 20; 10 predictable ids.
    fn example() -> (CountLm, Vocabulary) {
        let mut v = Vocabulary::new();
        let ids: Vec<TokenId> = ["a", "b", "c", "d", "e", "f", "g", "h"].iter().map(|t| v.intern(t)).collect();
        let uni = [(ids[0], 4), (ids[1], 5), (ids[2], 2), (ids[3], 2), (ids[4], 2), (ids[5], 1), (ids[6], 1), (ids[7], 1), (EOS_ID, 2)];
        let o1 = OrderCounts::from_entries(1, uni.iter().map(|&(i, c)| (vec![i], c)).collect());
        let o2 = OrderCounts::from_entries(2, vec![(vec![ids[0], ids[1]], 3), (vec![ids[0], ids[2]], 1)]);
        let table = NGramCountTable::new(vec![o1, o2], CountSource::External);
        let w = JmWeights::fixed(&[0.1, 0.3, 0.6], Buckets::default()).unwrap();
        (CountLm::new(Arc::new(table), Arc::new(v.clone()), w).unwrap(), v)
    }

    #[test]
    fn hand_computed_bigram_probability() {
        let (lm, v) = example();
        assert_eq!(lm.vocab_size(), 10);
        let p = lm.logprob(&[v.lookup("a")], v.lookup("b")).exp();
        assert!((p - (0.6 * 0.75 + 0.3 * 0.25 + 0.1 * 0.1)).abs() < 1e-12);
        assert!((p - 0.535).abs() < 1e-12);
    }

    #[test]
    fn unseen_history_redistributes() {
        let (lm, v) = example();
        // history `b` has no bigram total: only unigram and floor remain
        let p = lm.logprob(&[v.lookup("b")], v.lookup("b")).exp();
        assert!((p - (0.3 * 0.25 + 0.1 * 0.1) / 0.4).abs() < 1e-12);
    }

    #[test]
    fn unseen_word_gets_the_floor() {
        let (lm, v) = example();
        let p = lm.logprob(&[v.lookup("a")], UNK_ID).exp();
        assert!((p - 0.1 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn bucket_index() {
        let b = Buckets::default();
        assert_eq!(b.index(0), 0);
        assert_eq!(b.index(1), 1);
        assert_eq!(b.index(3), 2);
        assert_eq!(b.index(63), 5);
        assert_eq!(b.index(1_000_000), 7);
        assert!(Buckets::new(vec![0, 2, 2]).is_err());
        assert!(Buckets::new(vec![1, 2]).is_err());
    }

    #[test]
    fn weight_file_round_trip() {
        let w = JmWeights::fixed(&[0.1, 0.2, 0.3, 0.4], Buckets::default()).unwrap();
        let mut buf = Vec::new();
        w.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with("1\t0\t"));
        assert_eq!(JmWeights::read(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let text = "1\t0\t0.5\t0.6\n";
        assert!(matches!(JmWeights::read(text.as_bytes()), Err(CountLmError::BadWeights { .. })));
    }
}

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;

use super::normalize::TokenSequence;
use super::vocab::{TokenId, BOS_ID};

/// Where a count table came from. Corpus tables satisfy prefix consistency;
/// external tables (e.g. cutoff-filtered releases) need not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountSource {
    Corpus,
    External,
}

/// Sorted counts for all N-grams of one order, stored as a flat id array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderCounts {
    order: usize,
    keys: Vec<TokenId>,
    counts: Vec<u64>,
}

impl OrderCounts {
    pub fn empty(order: usize) -> Self {
        assert!(order >= 1);
        OrderCounts {
            order,
            keys: Vec::new(),
            counts: Vec::new(),
        }
    }

    /// Builds from unsorted entries, summing duplicates and dropping zeros.
    pub fn from_entries(order: usize, mut entries: Vec<(Vec<TokenId>, u64)>) -> Self {
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut out = OrderCounts::empty(order);
        for (gram, count) in entries {
            assert_eq!(gram.len(), order, "gram arity does not match order");
            if count == 0 {
                continue;
            }
            match out.counts.last_mut() {
                Some(last) if out.keys[out.keys.len() - order..] == gram[..] => *last += count,
                _ => {
                    out.keys.extend_from_slice(&gram);
                    out.counts.push(count);
                }
            }
        }
        out
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn gram(&self, index: usize) -> &[TokenId] {
        &self.keys[index * self.order..(index + 1) * self.order]
    }

    pub fn count_at(&self, index: usize) -> u64 {
        self.counts[index]
    }

    fn search(&self, gram: &[TokenId]) -> Result<usize, usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.gram(mid).cmp(gram) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Ok(mid),
            }
        }
        Err(lo)
    }

    pub fn get(&self, gram: &[TokenId]) -> Option<u64> {
        if gram.len() != self.order {
            return None;
        }
        self.search(gram).ok().map(|i| self.counts[i])
    }

    /// Entries whose first `prefix.len()` ids equal `prefix`, in sorted order.
    pub fn with_prefix<'a>(
        &'a self,
        prefix: &'a [TokenId],
    ) -> impl Iterator<Item = (&'a [TokenId], u64)> + 'a {
        let start = match self.search_prefix_start(prefix) {
            Some(i) => i,
            None => self.len(),
        };
        (start..self.len())
            .map(move |i| (self.gram(i), self.counts[i]))
            .take_while(move |(g, _)| g.starts_with(prefix))
    }

    fn search_prefix_start(&self, prefix: &[TokenId]) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if &self.gram(mid)[..prefix.len()] < prefix {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (lo < self.len()).then_some(lo)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[TokenId], u64)> + '_ {
        (0..self.len()).map(move |i| (self.gram(i), self.counts[i]))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn merge(&self, other: &OrderCounts) -> OrderCounts {
        assert_eq!(self.order, other.order);
        let mut out = OrderCounts::empty(self.order);
        out.keys.reserve(self.keys.len() + other.keys.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let ord = if i == self.len() {
                Ordering::Greater
            } else if j == other.len() {
                Ordering::Less
            } else {
                self.gram(i).cmp(other.gram(j))
            };
            match ord {
                Ordering::Less => {
                    out.keys.extend_from_slice(self.gram(i));
                    out.counts.push(self.counts[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.keys.extend_from_slice(other.gram(j));
                    out.counts.push(other.counts[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.keys.extend_from_slice(self.gram(i));
                    out.counts.push(self.counts[i] + other.counts[j]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }
}

/// Counts for orders 1..=max_order. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCountTable {
    orders: Vec<OrderCounts>,
    source: CountSource,
}

impl NGramCountTable {
    pub fn new(orders: Vec<OrderCounts>, source: CountSource) -> Self {
        assert!(!orders.is_empty(), "count table needs at least one order");
        for (i, o) in orders.iter().enumerate() {
            assert_eq!(o.order(), i + 1, "orders must be listed 1..=n");
        }
        NGramCountTable { orders, source }
    }

    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    pub fn source(&self) -> CountSource {
        self.source
    }

    pub fn order(&self, k: usize) -> &OrderCounts {
        &self.orders[k - 1]
    }

    pub fn orders(&self) -> &[OrderCounts] {
        &self.orders
    }

    pub fn get(&self, gram: &[TokenId]) -> Option<u64> {
        if gram.is_empty() || gram.len() > self.max_order() {
            return None;
        }
        self.order(gram.len()).get(gram)
    }

    pub fn count(&self, gram: &[TokenId]) -> u64 {
        self.get(gram).unwrap_or(0)
    }

    /// Sum of unigram counts.
    pub fn total_tokens(&self) -> u64 {
        self.orders[0].total()
    }

    /// Additive merge of two tables of the same shape.
    pub fn merge(&self, other: &NGramCountTable) -> NGramCountTable {
        assert_eq!(self.max_order(), other.max_order(), "order mismatch in merge");
        let source = if self.source == CountSource::Corpus && other.source == CountSource::Corpus {
            CountSource::Corpus
        } else {
            CountSource::External
        };
        NGramCountTable {
            orders: self
                .orders
                .iter()
                .zip(&other.orders)
                .map(|(a, b)| a.merge(b))
                .collect(),
            source,
        }
    }

    /// Combines single-order tables (e.g. one per count file) into one table.
    /// Orders present in several inputs are summed.
    pub fn assemble(parts: Vec<NGramCountTable>, max_order: usize, source: CountSource) -> Self {
        let mut orders: Vec<OrderCounts> = (1..=max_order).map(OrderCounts::empty).collect();
        for part in parts {
            for (k, oc) in part.orders.into_iter().enumerate() {
                if k < max_order && !oc.is_empty() {
                    orders[k] = orders[k].merge(&oc);
                }
            }
        }
        NGramCountTable { orders, source }
    }

    /// First k-gram (k > 1) whose (k-1)-prefix is missing or has a smaller
    /// count. A prefix that is just `<s>` is implicit and never checked.
    pub fn prefix_violation(&self) -> Option<Vec<TokenId>> {
        for k in 2..=self.max_order() {
            for (gram, c) in self.order(k).iter() {
                let prefix = &gram[..k - 1];
                if prefix == [BOS_ID] {
                    continue;
                }
                if self.count(prefix) < c {
                    return Some(gram.to_vec());
                }
            }
        }
        None
    }
}

/// Accumulates counts in hash maps; `finish` sorts them into a table.
#[derive(Debug, Clone)]
pub struct CountBuilder {
    maps: Vec<HashMap<Vec<TokenId>, u64>>,
}

impl CountBuilder {
    pub fn new(max_order: usize) -> Self {
        assert!(max_order >= 1, "order must be at least 1");
        CountBuilder {
            maps: vec![HashMap::new(); max_order],
        }
    }

    pub fn max_order(&self) -> usize {
        self.maps.len()
    }

    /// Counts every suffix of `window` (lengths 1..=window.len()).
    pub fn add_window(&mut self, window: &[TokenId]) {
        debug_assert!(window.len() <= self.maps.len());
        for k in 1..=window.len() {
            let gram = &window[window.len() - k..];
            *self.maps[k - 1].entry(gram.to_vec()).or_insert(0) += 1;
        }
    }

    /// Counts all prediction windows of a boundary-marked sentence: every
    /// position after `<s>` is predicted once, with up to n-1 ids of history.
    pub fn add_sentence(&mut self, seq: &[TokenId]) {
        let n = self.maps.len();
        for i in 1..seq.len() {
            let start = (i + 1).saturating_sub(n);
            self.add_window(&seq[start..=i]);
        }
    }

    pub fn finish(self, source: CountSource) -> NGramCountTable {
        let orders = self
            .maps
            .into_iter()
            .enumerate()
            .map(|(k, m)| OrderCounts::from_entries(k + 1, m.into_iter().collect()))
            .collect();
        NGramCountTable::new(orders, source)
    }
}

/// Counts all windows of order ≤ n in boundary-marked sentences.
pub fn count_corpus<'a, I>(lines: I, n: usize) -> NGramCountTable
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    let mut builder = CountBuilder::new(n);
    for seq in lines {
        debug_assert!(seq.is_bounded(), "count_corpus expects boundary markers");
        builder.add_sentence(seq.ids());
    }
    builder.finish(CountSource::Corpus)
}

/// Shard-parallel counting: each shard is counted privately, then shards are
/// merged in index order. The result equals [`count_corpus`] on the whole input.
pub fn count_corpus_sharded(lines: &[TokenSequence], n: usize, shard_size: usize) -> NGramCountTable {
    let shard_size = shard_size.max(1);
    let shards: Vec<NGramCountTable> = lines
        .par_chunks(shard_size)
        .map(|chunk| count_corpus(chunk, n))
        .collect();
    shards
        .into_iter()
        .reduce(|a, b| a.merge(&b))
        .unwrap_or_else(|| CountBuilder::new(n).finish(CountSource::Corpus))
}

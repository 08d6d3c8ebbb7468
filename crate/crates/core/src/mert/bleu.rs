//! Single-reference corpus BLEU-4.

use std::collections::HashMap;
use std::ops::AddAssign;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU; additive across segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped n-gram matches per order 1..=4.
    pub matches: [u64; MAX_ORDER],
    /// Candidate n-grams per order.
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w.iter().map(AsRef::as_ref).collect()).or_default() += 1;
    }
    m
}

impl BleuStats {
    pub fn of<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> Self {
        let mut s = BleuStats {
            candidate_len: candidate.len() as u64,
            reference_len: reference.len() as u64,
            ..BleuStats::default()
        };
        for n in 1..=MAX_ORDER {
            let refs = ngram_counts(reference, n);
            for (g, c) in ngram_counts(candidate, n) {
                s.matches[n - 1] += c.min(refs.get(&g).copied().unwrap_or(0));
                s.totals[n - 1] += c;
            }
        }
        s
    }

    /// Geometric mean of the four precisions times the brevity penalty;
    /// 0 when any order has no matches.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_precision: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| (m as f64 / t as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        let ratio = self.reference_len as f64 / self.candidate_len as f64;
        let brevity = if ratio > 1.0 { (1.0 - ratio).exp() } else { 1.0 };
        brevity * log_precision.exp()
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for k in 0..MAX_ORDER {
            self.matches[k] += o.matches[k];
            self.totals[k] += o.totals[k];
        }
        self.candidate_len += o.candidate_len;
        self.reference_len += o.reference_len;
    }
}

impl std::iter::Sum for BleuStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(BleuStats::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{candidates} candidates for {references} references")]
pub struct SegmentMismatch {
    pub candidates: usize,
    pub references: usize,
}

pub fn bleu<S: AsRef<str>, T: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<T>],
) -> Result<(f64, BleuStats), SegmentMismatch> {
    if candidates.len() != references.len() {
        return Err(SegmentMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let stats: BleuStats = candidates.iter().zip(references).map(|(c, r)| BleuStats::of(c, r)).sum();
    Ok((stats.score(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn clipping_limits_repeated_words() {
        let s = BleuStats::of(&toks("the the the the"), &toks("the cat"));
        assert_eq!(s.matches, [1, 0, 0, 0]);
        assert_eq!(s.totals, [4, 3, 2, 1]);
        assert_eq!(s.score(), 0.0);
    }

    #[test]
    fn short_candidate_is_penalized() {
        let s = BleuStats::of(&toks("the cat sat on"), &toks("the cat sat on the mat"));
        assert!((s.score() - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_corpora_are_rejected() {
        assert!(bleu(&[toks("a")], &[toks("a"), toks("b")]).is_err());
    }
}

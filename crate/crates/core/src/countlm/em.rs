//! Held-out EM for the interpolation weights.
//!
//! Orders that drop out of a prediction (zero history total) make each event a
//! draw from the weight distribution truncated to the available orders. The
//! E-step credits an available order with its posterior and an unavailable
//! order `k` with `lambda_k / lambda(available)`, the expected number of
//! rejected draws landing on it; this is exact EM for the truncated mixture,
//! so the held-out likelihood never decreases.

use std::sync::Arc;

use log::warn;

use crate::corpus::{NGramCountTable, TokenId, TokenSequence, Vocabulary, BOS_ID};

use super::{Buckets, Components, CountLm, CountLmError, JmWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub buckets: Buckets,
    pub max_iterations: usize,
    /// Stop once the relative change in held-out log-likelihood drops below this.
    pub tolerance: f64,
    /// Starting weights; uniform over orders when absent.
    pub initial: Option<JmWeights>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            buckets: Buckets::default(),
            max_iterations: 200,
            tolerance: 1e-6,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmReport {
    /// Held-out natural-log likelihood of the starting weights, then after each iteration.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub events: usize,
    pub converged: bool,
    /// `(order, bucket)` pairs with no held-out events, filled from a neighbor.
    pub borrowed: Vec<(usize, usize)>,
    /// Largest |sum(lambda) - 1| seen after any M-step.
    pub max_simplex_error: f64,
}

/// Fits bucketed interpolation weights on held-out sentences.
pub fn estimate_jm_weights(
    counts: Arc<NGramCountTable>,
    vocab: Arc<Vocabulary>,
    heldout: &[TokenSequence],
    config: &EmConfig,
) -> Result<(JmWeights, EmReport), CountLmError> {
    let n = counts.max_order();
    let mut weights = match &config.initial {
        Some(w) => w.clone(),
        None => JmWeights::uniform(n, config.buckets.clone()),
    };
    let lm = CountLm::new(counts, vocab, weights.clone())?;
    if weights.buckets != config.buckets {
        return Err(CountLmError::BadBuckets);
    }

    let mut groups: Vec<Vec<Vec<Components>>> = (1..=n).map(|_| vec![Vec::new(); config.buckets.len()]).collect();
    let mut events = 0;
    for seq in heldout {
        let ids = seq.ids();
        let mut history: Vec<TokenId> = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if i == 0 && id == BOS_ID {
                history.push(BOS_ID);
                continue;
            }
            let c = lm.components(&history, id);
            groups[c.order - 1][c.bucket].push(c);
            events += 1;
            history.push(lm.map_word(id));
        }
    }
    if events == 0 {
        return Err(CountLmError::EmptyHeldOut);
    }

    let log_likelihood = |w: &JmWeights| -> f64 {
        let mut ll = 0.0;
        for (m, per_bucket) in groups.iter().enumerate() {
            for (b, evs) in per_bucket.iter().enumerate() {
                let lambda = w.get(m + 1, b);
                ll += evs.iter().map(|c| c.mix(lambda).ln()).sum::<f64>();
            }
        }
        ll
    };

    let mut report = EmReport {
        log_likelihoods: vec![log_likelihood(&weights)],
        iterations: 0,
        events,
        converged: false,
        borrowed: Vec::new(),
        max_simplex_error: 0.0,
    };
    for _ in 0..config.max_iterations {
        for (m, per_bucket) in groups.iter().enumerate() {
            for (b, evs) in per_bucket.iter().enumerate() {
                if evs.is_empty() {
                    continue;
                }
                let next = em_step(weights.get(m + 1, b), evs);
                let err = (next.iter().sum::<f64>() - 1.0).abs();
                report.max_simplex_error = report.max_simplex_error.max(err);
                weights.set(m + 1, b, next);
            }
        }
        report.iterations += 1;
        let prev = *report.log_likelihoods.last().expect("initial likelihood");
        let ll = log_likelihood(&weights);
        report.log_likelihoods.push(ll);
        if (ll - prev).abs() <= config.tolerance * prev.abs() {
            report.converged = true;
            break;
        }
    }

    for (m, per_bucket) in groups.iter().enumerate() {
        let populated: Vec<usize> = (0..per_bucket.len()).filter(|&b| !per_bucket[b].is_empty()).collect();
        for (b, events) in per_bucket.iter().enumerate() {
            if !events.is_empty() {
                continue;
            }
            let Some(&src) = populated.iter().min_by_key(|&&p| (p.abs_diff(b), p)) else {
                continue;
            };
            warn!(
                "order {} bucket {} has no held-out events; using bucket {}",
                m + 1,
                config.buckets.lower_bounds()[b],
                config.buckets.lower_bounds()[src]
            );
            let v = weights.get(m + 1, src).to_vec();
            weights.set(m + 1, b, v);
            report.borrowed.push((m + 1, b));
        }
        if populated.is_empty() {
            warn!("order {} has no held-out events; keeping starting weights", m + 1);
        }
    }
    weights.validate()?;
    Ok((weights, report))
}

/// One EM update of a weight vector over its events.
pub(crate) fn em_step(lambda: &[f64], events: &[Components]) -> Vec<f64> {
    let mut expected = vec![0.0; lambda.len()];
    for c in events {
        let mut avail = 0.0;
        let mut joint = 0.0;
        for (k, r) in c.rel.iter().enumerate() {
            if let Some(p) = r {
                avail += lambda[k];
                joint += lambda[k] * p;
            }
        }
        for (k, r) in c.rel.iter().enumerate() {
            expected[k] += match r {
                Some(p) => lambda[k] * p / joint,
                None => lambda[k] / avail,
            };
        }
    }
    let total: f64 = expected.iter().sum();
    expected.iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_matches_hand_trace() {
        // two orders, three events with unigram probabilities 0.5, 0.25, 0.25
        // and floor 0.1: posterior of the unigram order is p / (p + 0.1)
        let ev = |p: f64| Components {
            order: 1,
            bucket: 0,
            rel: vec![Some(0.1), Some(p)],
        };
        let next = em_step(&[0.5, 0.5], &[ev(0.5), ev(0.25), ev(0.25)]);
        let r1 = 0.5 / 0.6 + 2.0 * (0.25 / 0.35);
        assert!((next[1] - r1 / 3.0).abs() < 1e-15);
        assert!((next[0] + next[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unavailable_order_keeps_its_share() {
        let evs = vec![Components {
            order: 2,
            bucket: 0,
            rel: vec![Some(0.2), Some(0.2), None],
        }];
        // the two available orders are tied, so their relative weights stay put
        // and the unavailable one is credited lambda_k / lambda(A)
        let next = em_step(&[0.25, 0.25, 0.5], &evs);
        let want = [0.5 / 2.0, 0.5 / 2.0, 1.0 / 2.0];
        for (a, b) in next.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

//! Linear interpolation of sentence scorers, with fixed weights or with
//! weights fit per source segment on that segment's 1-best hypothesis.

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};

use log::warn;
use rayon::prelude::*;

use crate::scorer::{ScoreError, SegmentScorer, SentenceScorer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixtureError {
    #[error("a mixture needs at least one component")]
    NoComponents,
    #[error("{weights} weights for {components} components")]
    Shape { weights: usize, components: usize },
    #[error("mixture weights must be non-negative and sum to 1")]
    NotSimplex,
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Clone)]
pub struct StaticMixture {
    components: Vec<Arc<dyn SentenceScorer>>,
    weights: Vec<f64>,
}

fn check_simplex(weights: &[f64], components: usize) -> Result<(), MixtureError> {
    if components == 0 {
        return Err(MixtureError::NoComponents);
    }
    if weights.len() != components {
        return Err(MixtureError::Shape {
            weights: weights.len(),
            components,
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(MixtureError::NotSimplex);
    }
    Ok(())
}

/// Per-position `ln sum_j w_j exp(lp_j)`; zero-weight components are ignored.
fn mix_positions(weights: &[f64], per_component: &[Vec<f64>]) -> Vec<f64> {
    let len = per_component.first().map_or(0, Vec::len);
    (0..len)
        .map(|i| {
            let terms: Vec<f64> = weights
                .iter()
                .zip(per_component)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, lps)| w.ln() + lps[i])
                .collect();
            let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return top;
            }
            top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        })
        .collect()
}

impl StaticMixture {
    pub fn new(components: Vec<Arc<dyn SentenceScorer>>, weights: Vec<f64>) -> Result<Self, MixtureError> {
        check_simplex(&weights, components.len())?;
        Ok(StaticMixture { components, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Arc<dyn SentenceScorer>] {
        &self.components
    }

    fn component_logprobs(&self, words: &[&str]) -> Result<Vec<Vec<f64>>, ScoreError> {
        self.components.iter().map(|c| c.token_logprobs(words)).collect()
    }

    /// Token log-probabilities under explicit weights.
    pub fn token_logprobs_with(&self, weights: &[f64], words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        Ok(mix_positions(weights, &self.component_logprobs(words)?))
    }
}

impl SentenceScorer for StaticMixture {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        self.token_logprobs_with(&self.weights, words)
    }

    fn is_oov(&self, word: &str) -> bool {
        self.components.iter().all(|c| c.is_oov(word))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEmConfig {
    pub max_iterations: usize,
    /// Relative log-likelihood change below which fitting stops.
    pub tolerance: f64,
}

impl Default for MixtureEmConfig {
    fn default() -> Self {
        MixtureEmConfig {
            max_iterations: 200,
            tolerance: 1e-6,
        }
    }
}

/// EM for mixture weights over fixed per-component token log-probabilities
/// (`per_component[j][i]`). Returns the weights and the log-likelihood after
/// each iteration (index 0 is the starting point). Positions no component
/// can predict are skipped.
pub fn fit_mixture_weights(per_component: &[Vec<f64>], initial: &[f64], config: &MixtureEmConfig) -> (Vec<f64>, Vec<f64>) {
    let k = per_component.len();
    let len = per_component.first().map_or(0, Vec::len);
    let events: Vec<Vec<f64>> = (0..len)
        .map(|i| per_component.iter().map(|lps| lps[i].exp()).collect::<Vec<f64>>())
        .filter(|ps| ps.iter().any(|&p| p > 0.0))
        .collect();
    let ll = |w: &[f64]| -> f64 {
        events
            .iter()
            .map(|ps| ps.iter().zip(w).map(|(p, l)| p * l).sum::<f64>().ln())
            .sum()
    };
    let mut weights = initial.to_vec();
    let mut trace = vec![ll(&weights)];
    if events.is_empty() {
        return (weights, trace);
    }
    for _ in 0..config.max_iterations {
        let mut expected = vec![0.0; k];
        for ps in &events {
            let z: f64 = ps.iter().zip(&weights).map(|(p, l)| p * l).sum();
            if z <= 0.0 {
                continue;
            }
            for j in 0..k {
                expected[j] += weights[j] * ps[j] / z;
            }
        }
        let total: f64 = expected.iter().sum();
        weights = expected.iter().map(|e| e / total).collect();
        let prev = *trace.last().expect("starting likelihood");
        let cur = ll(&weights);
        trace.push(cur);
        if (cur - prev).abs() <= config.tolerance * prev.abs() {
            break;
        }
    }
    (weights, trace)
}

/// Per-segment weights fit on 1-best hypotheses, falling back to the static
/// weights for segments without one.
pub struct DynamicMixture {
    base: StaticMixture,
    segment_weights: BTreeMap<String, Vec<f64>>,
    warned: Mutex<HashSet<String>>,
}

impl DynamicMixture {
    /// Fits weights for every segment in `one_best` (segment id to tokens),
    /// starting each fit from uniform weights.
    pub fn fit(
        base: StaticMixture,
        one_best: &BTreeMap<String, Vec<String>>,
        config: &MixtureEmConfig,
    ) -> Result<Self, MixtureError> {
        let k = base.components.len();
        let uniform = vec![1.0 / k as f64; k];
        let fitted: Vec<(String, Vec<f64>)> = one_best
            .par_iter()
            .map(|(seg, toks)| {
                let words: Vec<&str> = toks.iter().map(String::as_str).collect();
                let lps = base.component_logprobs(&words)?;
                let (w, _) = fit_mixture_weights(&lps, &uniform, config);
                Ok((seg.clone(), w))
            })
            .collect::<Result<_, ScoreError>>()?;
        Ok(DynamicMixture {
            base,
            segment_weights: fitted.into_iter().collect(),
            warned: Mutex::new(HashSet::new()),
        })
    }

    pub fn segment_weights(&self, segment: &str) -> Option<&[f64]> {
        self.segment_weights.get(segment).map(Vec::as_slice)
    }

    pub fn segment_token_logprobs(&self, segment: &str, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        let weights = match self.segment_weights.get(segment) {
            Some(w) => w.as_slice(),
            None => {
                let mut warned = self.warned.lock().expect("warning set lock");
                if warned.insert(segment.to_string()) {
                    warn!("no 1-best hypothesis for segment {segment:?}; using static weights");
                }
                &self.base.weights
            }
        };
        self.base.token_logprobs_with(weights, words)
    }
}

impl SegmentScorer for DynamicMixture {
    fn segment_logprob(&self, segment: &str, words: &[&str]) -> Result<f64, ScoreError> {
        Ok(self.segment_token_logprobs(segment, words)?.iter().sum())
    }
}

pub enum MixMode {
    Static(Vec<f64>),
    /// Weights fit per segment on `one_best`; `fallback` serves segments
    /// without a 1-best.
    Dynamic {
        fallback: Vec<f64>,
        one_best: BTreeMap<String, Vec<String>>,
    },
}

pub fn mix_components(components: Vec<Arc<dyn SentenceScorer>>, mode: MixMode) -> Result<Box<dyn SegmentScorer>, MixtureError> {
    match mode {
        MixMode::Static(w) => Ok(Box::new(StaticMixture::new(components, w)?)),
        MixMode::Dynamic { fallback, one_best } => {
            let base = StaticMixture::new(components, fallback)?;
            Ok(Box::new(DynamicMixture::fit(base, &one_best, &MixtureEmConfig::default())?))
        }
    }
}

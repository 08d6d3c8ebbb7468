//! A reranking task with a known answer: a hidden weight vector makes the
//! reference the log-linear argmax of every segment.
#![allow(dead_code)]

use lmrescore::rerank::{Hypothesis, NBestList, DECODER_FEATURE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SyntheticTask {
    pub lists: Vec<NBestList>,
    pub references: Vec<Vec<String>>,
    /// Decoder weight first, then one weight per extra feature.
    pub hidden: Vec<f64>,
    pub feature_names: Vec<String>,
}

pub fn synthetic_task(seed: u64, segments: usize, per_segment: usize, features: usize) -> SyntheticTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feature_names: Vec<String> = (0..features).map(|k| format!("f{k}")).collect();
    let mut hidden = vec![1.0];
    hidden.extend((0..features).map(|_| {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        sign * rng.gen_range(1.0..3.0)
    }));
    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let mut lists = Vec::new();
    let mut references = Vec::new();
    for s in 0..segments {
        let seg = format!("seg{s}");
        let mut hyps: Vec<Hypothesis> = (0..per_segment)
            .map(|_| {
                let len = rng.gen_range(6..12);
                Hypothesis {
                    segment: seg.clone(),
                    tokens: (0..len).map(|_| words.choose(&mut rng).unwrap().clone()).collect(),
                    features: feature_names.iter().map(|n| (n.clone(), rng.gen_range(-1.0..1.0))).collect(),
                    decoder_score: rng.gen_range(-10.0..-5.0),
                    rank: 0,
                }
            })
            .collect();
        hyps.sort_by(|a, b| b.decoder_score.total_cmp(&a.decoder_score));
        for (r, h) in hyps.iter_mut().enumerate() {
            h.rank = r;
        }
        let score = |h: &Hypothesis| {
            hidden[0] * h.decoder_score + h.features.iter().zip(&hidden[1..]).map(|((_, v), w)| v * w).sum::<f64>()
        };
        let best = hyps
            .iter()
            .max_by(|a, b| score(a).total_cmp(&score(b)).then(b.rank.cmp(&a.rank)))
            .unwrap();
        references.push(best.tokens.clone());
        lists.push(NBestList {
            segment: seg,
            source: None,
            hypotheses: hyps,
        });
    }
    SyntheticTask {
        lists,
        references,
        hidden,
        feature_names,
    }
}

pub fn all_feature_names(task: &SyntheticTask) -> Vec<String> {
    std::iter::once(DECODER_FEATURE.to_string()).chain(task.feature_names.iter().cloned()).collect()
}

//! Minimum-error-rate training: corpus BLEU of the log-linear selection,
//! maximized over the weights by Nelder-Mead simplex search with seeded
//! random restarts.

pub mod bleu;

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::rerank::{argmax, feature_matrix, NBestList, RerankError, WeightVector, DECODER_FEATURE};

pub use bleu::{bleu, BleuStats, SegmentMismatch, MAX_ORDER};

#[derive(Debug, thiserror::Error)]
pub enum MertError {
    #[error("{lists} N-best lists for {references} references")]
    SegmentCount { lists: usize, references: usize },
    #[error("segment {0:?} has no hypotheses")]
    EmptyList(String),
    #[error("fixed weight {0:?} is not in the weight vector")]
    UnknownFixed(String),
    #[error("no free weights to optimize")]
    NoFreeWeights,
    #[error(transparent)]
    Rerank(#[from] RerankError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexParams {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Initial simplex edge along each free axis.
    pub initial_step: f64,
    /// A simplex whose vertices all lie this close to the best one has converged.
    pub min_edge: f64,
    pub max_iterations: usize,
    /// Re-inflations of a converged simplex around its best vertex, repeated
    /// while they keep improving.
    pub reinflations: usize,
    /// Runs from the initial weights plus `restarts - 1` perturbed starts.
    pub restarts: usize,
    /// Half-width of the uniform perturbation of restart starting points.
    pub perturbation: f64,
    pub seed: u64,
    /// Weight held at its initial value.
    pub fixed: Option<String>,
}

impl Default for SimplexParams {
    fn default() -> Self {
        SimplexParams {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 1.0,
            min_edge: 1e-4,
            max_iterations: 300,
            reinflations: 3,
            restarts: 8,
            perturbation: 1.0,
            seed: 0,
            fixed: Some(DECODER_FEATURE.to_string()),
        }
    }
}

pub struct MertProblem {
    pub lists: Vec<NBestList>,
    /// One reference token sequence per list.
    pub references: Vec<Vec<String>>,
    pub initial: WeightVector,
    pub params: SimplexParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Best BLEU found so far across all restarts.
    pub best_bleu: f64,
    pub simplex_edge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MertResult {
    pub weights: WeightVector,
    pub bleu: f64,
    pub initial_bleu: f64,
    /// Best BLEU reached by each restart.
    pub restart_bleu: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// Every list offered a single distinct candidate, so BLEU cannot vary.
    pub degenerate: bool,
}

/// Frozen per-list data: feature rows in weight order and BLEU statistics
/// of every hypothesis against the reference.
struct Objective {
    matrices: Vec<Vec<Vec<f64>>>,
    stats: Vec<Vec<BleuStats>>,
}

impl Objective {
    fn stats_at(&self, weights: &[f64]) -> BleuStats {
        self.matrices
            .par_iter()
            .zip(&self.stats)
            .map(|(m, s)| s[argmax(m, weights).expect("lists are non-empty")])
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }

    fn bleu(&self, weights: &[f64]) -> f64 {
        self.stats_at(weights).score()
    }
}

fn max_edge(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

struct Search<'a> {
    objective: &'a Objective,
    params: &'a SimplexParams,
    /// Maps free coordinates into a full weight vector.
    base: Vec<f64>,
    free: Vec<usize>,
    best: (Vec<f64>, f64),
    trace: Vec<TraceRow>,
}

impl Search<'_> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut w = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            w[i] = v;
        }
        w
    }

    fn eval(&mut self, x: Vec<f64>) -> (Vec<f64>, f64) {
        let f = self.objective.bleu(&self.full(&x));
        if f > self.best.1 {
            self.best = (x.clone(), f);
        }
        (x, f)
    }

    fn inflate(&mut self, center: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mut simplex = vec![self.eval(center.to_vec())];
        for i in 0..center.len() {
            let mut x = center.to_vec();
            x[i] += self.params.initial_step * center[i].abs().max(1.0);
            simplex.push(self.eval(x));
        }
        simplex
    }

    /// One Nelder-Mead run from `start`; returns the best value it reached.
    fn run(&mut self, start: &[f64]) -> f64 {
        let p = self.params;
        let n = start.len();
        let mut simplex = self.inflate(start);
        let mut inflations = 0;
        let mut at_inflation = f64::NEG_INFINITY;
        for _ in 0..p.max_iterations {
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let edge = max_edge(&simplex);
            self.trace.push(TraceRow {
                iteration: self.trace.len(),
                best_bleu: self.best.1,
                simplex_edge: edge,
            });
            if edge < p.min_edge {
                if inflations < p.reinflations && simplex[0].1 > at_inflation {
                    inflations += 1;
                    at_inflation = simplex[0].1;
                    let center = simplex[0].0.clone();
                    simplex = self.inflate(&center);
                    continue;
                }
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64)
                .collect();
            let toward = |coef: f64, x: &[f64]| -> Vec<f64> {
                centroid.iter().zip(x).map(|(c, xi)| c + coef * (xi - c)).collect()
            };
            let worst = simplex[n].clone();
            let reflected = self.eval(toward(-p.reflection, &worst.0));
            if reflected.1 > simplex[0].1 {
                let expanded = self.eval(toward(-p.reflection * p.expansion, &worst.0));
                simplex[n] = if expanded.1 >= reflected.1 { expanded } else { reflected };
            } else if reflected.1 >= simplex[n - 1].1 {
                // Accepting ties keeps the simplex moving across plateaus.
                simplex[n] = reflected;
            } else {
                let outside = reflected.1 > worst.1;
                let contracted = if outside {
                    self.eval(toward(-p.reflection * p.contraction, &worst.0))
                } else {
                    self.eval(toward(p.contraction, &worst.0))
                };
                let accept = if outside { contracted.1 >= reflected.1 } else { contracted.1 > worst.1 };
                if accept {
                    simplex[n] = contracted;
                } else {
                    let best = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, xi)| b + p.shrink * (xi - b)).collect();
                        *v = self.eval(x);
                    }
                }
            }
        }
        simplex.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn optimize(problem: &MertProblem) -> Result<MertResult, MertError> {
    let p = &problem.params;
    if problem.lists.len() != problem.references.len() {
        return Err(MertError::SegmentCount {
            lists: problem.lists.len(),
            references: problem.references.len(),
        });
    }
    if let Some(l) = problem.lists.iter().find(|l| l.hypotheses.is_empty()) {
        return Err(MertError::EmptyList(l.segment.clone()));
    }
    let names: Vec<&str> = problem.initial.names().collect();
    let fixed = match &p.fixed {
        Some(f) => Some(names.iter().position(|n| n == f).ok_or_else(|| MertError::UnknownFixed(f.clone()))?),
        None => None,
    };
    let free: Vec<usize> = (0..names.len()).filter(|&i| Some(i) != fixed).collect();
    if free.is_empty() {
        return Err(MertError::NoFreeWeights);
    }
    let matrices = problem
        .lists
        .iter()
        .map(|l| feature_matrix(l, &problem.initial))
        .collect::<Result<Vec<_>, _>>()?;
    let stats: Vec<Vec<BleuStats>> = problem
        .lists
        .par_iter()
        .zip(&problem.references)
        .map(|(l, r)| l.hypotheses.iter().map(|h| BleuStats::of(&h.tokens, r)).collect())
        .collect();
    let objective = Objective { matrices, stats };
    let base = problem.initial.values();
    let initial_bleu = objective.bleu(&base);

    let degenerate = problem
        .lists
        .iter()
        .all(|l| l.hypotheses.iter().all(|h| h.tokens == l.hypotheses[0].tokens));
    if degenerate {
        return Ok(MertResult {
            weights: problem.initial.clone(),
            bleu: initial_bleu,
            initial_bleu,
            restart_bleu: Vec::new(),
            trace: vec![TraceRow {
                iteration: 0,
                best_bleu: initial_bleu,
                simplex_edge: 0.0,
            }],
            degenerate: true,
        });
    }

    let start: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    let mut search = Search {
        objective: &objective,
        params: p,
        base: base.clone(),
        free: free.clone(),
        best: (start.clone(), initial_bleu),
        trace: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut restart_bleu = Vec::with_capacity(p.restarts.max(1));
    for r in 0..p.restarts.max(1) {
        let x0: Vec<f64> = if r == 0 {
            start.clone()
        } else {
            start
                .iter()
                .map(|&x| x + rng.gen_range(-1.0..=1.0) * p.perturbation * x.abs().max(1.0))
                .collect()
        };
        restart_bleu.push(search.run(&x0));
    }
    let (best_x, best_bleu) = search.best.clone();
    Ok(MertResult {
        weights: problem.initial.with_values(&search.full(&best_x)),
        bleu: best_bleu,
        initial_bleu,
        restart_bleu,
        trace: search.trace,
        degenerate: false,
    })
}

/// `iteration TAB best_bleu TAB simplex_edge` per line.
pub fn write_log<W: Write>(mut out: W, trace: &[TraceRow]) -> io::Result<()> {
    for row in trace {
        writeln!(out, "{}\t{}\t{}", row.iteration, row.best_bleu, row.simplex_edge)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::Hypothesis;

    fn hyp(seg: &str, toks: &str, feats: &[(&str, f64)], rank: usize) -> Hypothesis {
        Hypothesis {
            segment: seg.into(),
            tokens: toks.split(' ').map(String::from).collect(),
            features: feats.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
            decoder_score: 0.0,
            rank,
        }
    }

    #[test]
    fn identical_hypotheses_are_degenerate() {
        let list = NBestList {
            segment: "s".into(),
            source: None,
            hypotheses: vec![hyp("s", "a b c d", &[("f", 1.0)], 0), hyp("s", "a b c d", &[("f", 0.0)], 1)],
        };
        let initial = WeightVector::covering(std::slice::from_ref(&list), 0.5);
        let r = optimize(&MertProblem {
            lists: vec![list],
            references: vec!["a b c e".split(' ').map(String::from).collect()],
            initial: initial.clone(),
            params: SimplexParams::default(),
        })
        .unwrap();
        assert!(r.degenerate);
        assert_eq!(r.weights, initial);
    }

    #[test]
    fn trace_is_non_decreasing() {
        let lists: Vec<NBestList> = (0..3)
            .map(|s| {
                let seg = format!("s{s}");
                NBestList {
                    segment: seg.clone(),
                    source: None,
                    hypotheses: vec![
                        hyp(&seg, "x y z w", &[("f", 1.0), ("g", 0.0)], 0),
                        hyp(&seg, "a b c d", &[("f", 0.0), ("g", 1.0)], 1),
                    ],
                }
            })
            .collect();
        let refs = vec!["a b c d".split(' ').map(String::from).collect(); 3];
        let initial = WeightVector::covering(&lists, 0.0);
        let r = optimize(&MertProblem {
            lists,
            references: refs,
            initial,
            params: SimplexParams::default(),
        })
        .unwrap();
        assert_eq!(r.bleu, 1.0);
        assert!(r.trace.windows(2).all(|w| w[0].best_bleu <= w[1].best_bleu));
    }
}

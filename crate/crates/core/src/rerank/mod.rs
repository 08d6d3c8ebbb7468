//! N-best lists, LM feature columns and log-linear hypothesis selection.
//!
//! N-best file, one hypothesis per line, segments contiguous:
//!
//! ```text
//! segment_id ||| token sequence ||| name=value name=value ... ||| decoder_score
//! ```
//!
//! A fifth field (word alignment) is accepted and dropped. The decoder score
//! is available to weights as the feature [`DECODER_FEATURE`].

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use log::warn;
use rayon::prelude::*;

use crate::scorer::SegmentScorer;

pub const FIELD_SEPARATOR: &str = " ||| ";
pub const DECODER_FEATURE: &str = "decoder";
pub const DEFAULT_LIST_LIMIT: usize = 3000;
pub const DEFAULT_FAILURE_PENALTY: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: segment {segment:?} reappears after other segments")]
    NonContiguous { line: usize, segment: String },
    #[error("segment {segment:?} hypothesis {rank}: no value for feature {feature:?}")]
    MissingFeature { segment: String, rank: usize, feature: String },
    #[error("segment {segment:?} hypothesis {rank}: feature {feature:?} has no weight")]
    UnweightedFeature { segment: String, rank: usize, feature: String },
    #[error("feature {0:?} is already present")]
    FeatureExists(String),
    #[error("weight {0:?} is defined twice")]
    DuplicateWeight(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub segment: String,
    pub tokens: Vec<String>,
    /// Named features in file order; names are unique.
    pub features: Vec<(String, f64)>,
    pub decoder_score: f64,
    /// Position in the decoder's list, 0 for its 1-best.
    pub rank: usize,
}

impl Hypothesis {
    pub fn feature(&self, name: &str) -> Option<f64> {
        if name == DECODER_FEATURE {
            return Some(self.decoder_score);
        }
        self.features.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Feature names including the decoder score.
    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(DECODER_FEATURE).chain(self.features.iter().map(|(n, _)| n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub segment: String,
    /// Source text, carried opaquely when known.
    pub source: Option<String>,
    pub hypotheses: Vec<Hypothesis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOptions {
    /// Hypotheses beyond this many per segment are dropped with a warning.
    pub limit: usize,
    pub allow_empty: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            limit: DEFAULT_LIST_LIMIT,
            allow_empty: false,
        }
    }
}

fn parse_features(field: &str, line: usize) -> Result<Vec<(String, f64)>, RerankError> {
    let err = |msg: String| RerankError::Parse { line, msg };
    let mut out: Vec<(String, f64)> = Vec::new();
    for item in field.split_whitespace() {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| err(format!("feature {item:?} lacks '='")))?;
        if name.is_empty() || name == DECODER_FEATURE {
            return Err(err(format!("reserved or empty feature name in {item:?}")));
        }
        let value: f64 = value.parse().map_err(|_| err(format!("bad value in {item:?}")))?;
        if out.iter().any(|(n, _)| n == name) {
            return Err(err(format!("feature {name:?} repeated")));
        }
        out.push((name.to_string(), value));
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize, opts: &ReadOptions) -> Result<Hypothesis, RerankError> {
    let err = |msg: String| RerankError::Parse { line: lineno, msg };
    let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
    if fields.len() != 4 && fields.len() != 5 {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    }
    if fields[0].is_empty() || fields[0].contains(char::is_whitespace) {
        return Err(err(format!("bad segment id {:?}", fields[0])));
    }
    let tokens: Vec<String> = fields[1].split_whitespace().map(String::from).collect();
    if tokens.is_empty() && !opts.allow_empty {
        return Err(err("empty hypothesis".to_string()));
    }
    let decoder_score: f64 = fields[3]
        .parse()
        .map_err(|_| err(format!("bad decoder score {:?}", fields[3])))?;
    Ok(Hypothesis {
        segment: fields[0].to_string(),
        tokens,
        features: parse_features(fields[2], lineno)?,
        decoder_score,
        rank: 0,
    })
}

pub fn read_nbest<R: BufRead>(input: R, opts: &ReadOptions) -> Result<Vec<NBestList>, RerankError> {
    let mut lists: Vec<NBestList> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut dropped = 0usize;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut hyp = parse_line(&line, i + 1, opts)?;
        let same = lists.last().is_some_and(|l| l.segment == hyp.segment);
        if !same {
            if !seen.insert(hyp.segment.clone()) {
                return Err(RerankError::NonContiguous {
                    line: i + 1,
                    segment: hyp.segment,
                });
            }
            lists.push(NBestList {
                segment: hyp.segment.clone(),
                source: None,
                hypotheses: Vec::new(),
            });
        }
        let list = lists.last_mut().expect("just pushed");
        if list.hypotheses.len() >= opts.limit {
            dropped += 1;
            continue;
        }
        hyp.rank = list.hypotheses.len();
        list.hypotheses.push(hyp);
    }
    if dropped > 0 {
        warn!("dropped {dropped} hypotheses beyond the per-segment limit of {}", opts.limit);
    }
    Ok(lists)
}

pub fn write_nbest<W: Write>(mut out: W, lists: &[NBestList]) -> io::Result<()> {
    for list in lists {
        for h in &list.hypotheses {
            let feats: Vec<String> = h.features.iter().map(|(n, v)| format!("{n}={v}")).collect();
            writeln!(
                out,
                "{}{FIELD_SEPARATOR}{}{FIELD_SEPARATOR}{}{FIELD_SEPARATOR}{}",
                h.segment,
                h.tokens.join(" "),
                feats.join(" "),
                h.decoder_score
            )?;
        }
    }
    out.flush()
}

/// A hypothesis the scorer could not handle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub segment: String,
    pub rank: usize,
    pub reason: String,
    /// The value substituted for the feature.
    pub substituted: f64,
}

/// Adds `name` = sentence log-probability (natural log) to every hypothesis.
/// A hypothesis the scorer rejects, or scores as non-finite, gets its list's
/// lowest successful value minus `penalty` (or `-penalty` if nothing in the
/// list scored) and is reported.
pub fn add_lm_feature(
    lists: &mut [NBestList],
    scorer: &dyn SegmentScorer,
    name: &str,
    penalty: f64,
) -> Result<Vec<ScoreFailure>, RerankError> {
    if name == DECODER_FEATURE
        || lists
            .iter()
            .flat_map(|l| &l.hypotheses)
            .any(|h| h.features.iter().any(|(n, _)| n == name))
    {
        return Err(RerankError::FeatureExists(name.to_string()));
    }
    let failures: Vec<Vec<ScoreFailure>> = lists
        .par_iter_mut()
        .map(|list| {
            let scores: Vec<Result<f64, String>> = list
                .hypotheses
                .par_iter()
                .map(|h| {
                    let words: Vec<&str> = h.tokens.iter().map(String::as_str).collect();
                    match scorer.segment_logprob(&h.segment, &words) {
                        Ok(v) if v.is_finite() => Ok(v),
                        Ok(v) => Err(format!("non-finite score {v}")),
                        Err(e) => Err(e.to_string()),
                    }
                })
                .collect();
            let floor = scores
                .iter()
                .filter_map(|s| s.as_ref().ok())
                .copied()
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
                .unwrap_or(0.0)
                - penalty;
            let mut failed = Vec::new();
            for (h, s) in list.hypotheses.iter_mut().zip(scores) {
                let value = match s {
                    Ok(v) => v,
                    Err(reason) => {
                        failed.push(ScoreFailure {
                            segment: h.segment.clone(),
                            rank: h.rank,
                            reason,
                            substituted: floor,
                        });
                        floor
                    }
                };
                h.features.push((name.to_string(), value));
            }
            failed
        })
        .collect();
    let failures: Vec<ScoreFailure> = failures.into_iter().flatten().collect();
    for f in &failures {
        warn!(
            "feature {name}: segment {} hypothesis {} unscorable ({}); using {}",
            f.segment, f.rank, f.reason, f.substituted
        );
    }
    Ok(failures)
}

/// Named log-linear weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    entries: Vec<(String, f64)>,
}

impl WeightVector {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self, RerankError> {
        let mut seen = HashSet::new();
        for (n, _) in &entries {
            if !seen.insert(n.as_str()) {
                return Err(RerankError::DuplicateWeight(n.clone()));
            }
        }
        Ok(WeightVector { entries })
    }

    /// One weight per feature found in `lists` (decoder first, then first-seen
    /// order); the decoder weight is 1 and every other weight `value`.
    pub fn covering(lists: &[NBestList], value: f64) -> Self {
        let mut entries = vec![(DECODER_FEATURE.to_string(), 1.0)];
        for h in lists.iter().flat_map(|l| &l.hypotheses) {
            for (n, _) in &h.features {
                if !entries.iter().any(|(e, _)| e == n) {
                    entries.push((n.clone(), value));
                }
            }
        }
        WeightVector { entries }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, v)| v).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same names, new values (in name order).
    pub fn with_values(&self, values: &[f64]) -> Self {
        WeightVector {
            entries: self.entries.iter().zip(values).map(|((n, _), &v)| (n.clone(), v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(&self.values().iter().map(|v| v * c).collect::<Vec<_>>())
    }

    /// `name TAB weight` per line.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (n, v) in &self.entries {
            writeln!(out, "{n}\t{v}")?;
        }
        out.flush()
    }

    /// Reads `name TAB weight` lines; `#` starts a comment.
    pub fn read<R: BufRead>(input: R) -> Result<Self, RerankError> {
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: &str| RerankError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut parts = body.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected 'name TAB weight'"));
            };
            entries.push((name.to_string(), value.parse().map_err(|_| err("bad weight"))?));
        }
        WeightVector::new(entries)
    }
}

/// Feature values of every hypothesis in weight order, checking that weights
/// and features correspond exactly.
pub fn feature_matrix(list: &NBestList, weights: &WeightVector) -> Result<Vec<Vec<f64>>, RerankError> {
    list.hypotheses
        .iter()
        .map(|h| {
            if let Some(extra) = h.feature_names().find(|n| weights.get(n).is_none()) {
                return Err(RerankError::UnweightedFeature {
                    segment: h.segment.clone(),
                    rank: h.rank,
                    feature: extra.to_string(),
                });
            }
            weights
                .names()
                .map(|n| {
                    h.feature(n).ok_or_else(|| RerankError::MissingFeature {
                        segment: h.segment.clone(),
                        rank: h.rank,
                        feature: n.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Index of the best row under `weights`; ties go to the earlier row.
pub fn argmax(matrix: &[Vec<f64>], weights: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in matrix.iter().enumerate() {
        let s: f64 = row.iter().zip(weights).map(|(h, w)| h * w).sum();
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Hypothesis indices, best first.
    pub order: Vec<usize>,
    /// Log-linear score per hypothesis index.
    pub scores: Vec<f64>,
}

impl Ranking {
    pub fn best(&self) -> Option<usize> {
        self.order.first().copied()
    }
}

/// Ranks by the weighted feature sum, descending; equal scores keep decoder order.
pub fn loglinear_select(list: &NBestList, weights: &WeightVector) -> Result<Ranking, RerankError> {
    let w = weights.values();
    let scores: Vec<f64> = feature_matrix(list, weights)?
        .iter()
        .map(|row| row.iter().zip(&w).map(|(h, l)| h * l).sum())
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(list.hypotheses[a].rank.cmp(&list.hypotheses[b].rank))
    });
    Ok(Ranking { order, scores })
}

/// `segment_id ||| chosen tokens` per list.
pub fn write_selection<W: Write>(mut out: W, lists: &[NBestList], chosen: &[usize]) -> io::Result<()> {
    for (list, &i) in lists.iter().zip(chosen) {
        writeln!(out, "{}{FIELD_SEPARATOR}{}", list.segment, list.hypotheses[i].tokens.join(" "))?;
    }
    out.flush()
}

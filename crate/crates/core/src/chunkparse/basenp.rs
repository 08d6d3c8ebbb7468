//! The baseNP boundary tagger and headword reduction.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use crate::corpus::normalize::is_punctuation;

use super::gap::{is_valid_sequence, spans, GapTag};
use super::ChunkError;

/// Sentence-final marks: `.`, `?`, `!` and runs of them, in the trailing
/// punctuation run of a sentence. Every other punctuation token is
/// intra-sentence.
pub fn final_punctuation(words: &[&str]) -> Vec<bool> {
    let mut out = vec![false; words.len()];
    for i in (0..words.len()).rev() {
        if !is_punctuation(words[i]) {
            break;
        }
        out[i] = words[i].chars().all(|c| matches!(c, '.' | '?' | '!'));
    }
    out
}

/// The tagger's view of a sentence: non-punctuation words, their POS tags,
/// and for each word whether intra-sentence punctuation precedes it (back to
/// the previous word).
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkInput {
    pub words: Vec<String>,
    pub tags: Vec<String>,
    pub punct_before: Vec<bool>,
    /// Token index of each word in the full sentence.
    pub positions: Vec<usize>,
}

impl ChunkInput {
    pub fn from_tokens(words: &[&str], tags: &[&str]) -> Self {
        let fin = final_punctuation(words);
        let mut input = ChunkInput {
            words: Vec::new(),
            tags: Vec::new(),
            punct_before: Vec::new(),
            positions: Vec::new(),
        };
        let mut pending = false;
        for (i, (&w, &t)) in words.iter().zip(tags).enumerate() {
            if is_punctuation(w) {
                pending |= !fin[i];
                continue;
            }
            input.punct_before.push(pending && !input.words.is_empty());
            input.words.push(w.to_string());
            input.tags.push(t.to_string());
            input.positions.push(i);
            pending = false;
        }
        input
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn full_key(&self, i: usize) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.words[i - 1],
            self.tags[i - 1],
            self.words[i],
            self.tags[i],
            u8::from(self.punct_before[i])
        )
    }

    fn pos_key(&self, i: usize) -> String {
        format!("{}\t{}\t{}", self.tags[i - 1], self.tags[i], u8::from(self.punct_before[i]))
    }
}

type Counts = [u64; 5];

/// P(G_i | w_{i-1}, t_{i-1}, w_i, t_i, c_i), smoothed by interpolating the
/// full context with (t_{i-1}, t_i, c_i) and an add-one prior. Each level
/// keeps weight n / (n + u), with n its context count and u the number of
/// distinct tags seen there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaseNpModel {
    full: BTreeMap<String, Counts>,
    pos: BTreeMap<String, Counts>,
    prior: Counts,
}

fn relative(c: &Counts, g: GapTag) -> f64 {
    c[g.index()] as f64 / c.iter().sum::<u64>() as f64
}

fn weight(c: &Counts) -> f64 {
    let n = c.iter().sum::<u64>() as f64;
    let u = c.iter().filter(|&&x| x > 0).count() as f64;
    n / (n + u)
}

/// A rejected training sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub sentence: usize,
    pub reason: String,
}

impl BaseNpModel {
    /// Trains on `(input, gold gaps)` pairs; sentences with invalid or
    /// misaligned gap sequences are skipped and reported.
    pub fn train<'a, I>(sentences: I) -> (Self, Vec<Rejection>)
    where
        I: IntoIterator<Item = (&'a ChunkInput, &'a [GapTag])>,
    {
        let mut model = BaseNpModel::default();
        let mut rejected = Vec::new();
        for (idx, (input, gaps)) in sentences.into_iter().enumerate() {
            let reason = if gaps.len() != input.len() {
                Some(format!("{} gap tags for {} words", gaps.len(), input.len()))
            } else if !is_valid_sequence(gaps) {
                let shown: Vec<String> = gaps.iter().map(|g| g.to_string()).collect();
                Some(format!("invalid bracketing {}", shown.join(" ")))
            } else {
                None
            };
            if let Some(reason) = reason {
                log::warn!("baseNP training sentence {}: {reason}", idx + 1);
                rejected.push(Rejection { sentence: idx, reason });
                continue;
            }
            for (i, gap) in gaps.iter().enumerate().take(input.len()).skip(1) {
                let g = gap.index();
                model.full.entry(input.full_key(i)).or_default()[g] += 1;
                model.pos.entry(input.pos_key(i)).or_default()[g] += 1;
                model.prior[g] += 1;
            }
        }
        (model, rejected)
    }

    /// Relative frequencies at the full-context and POS-only levels, when seen.
    pub fn level_estimates(&self, input: &ChunkInput, i: usize, g: GapTag) -> [Option<f64>; 2] {
        [
            self.full.get(&input.full_key(i)).map(|c| relative(c, g)),
            self.pos.get(&input.pos_key(i)).map(|c| relative(c, g)),
        ]
    }

    /// Smoothed probability of tag `g` on the gap before word `i` (`i >= 1`).
    pub fn prob(&self, input: &ChunkInput, i: usize, g: GapTag) -> f64 {
        let total: u64 = self.prior.iter().sum();
        let mut p = (self.prior[g.index()] + 1) as f64 / (total + 5) as f64;
        for c in [self.pos.get(&input.pos_key(i)), self.full.get(&input.full_key(i))].into_iter().flatten() {
            let l = weight(c);
            p = l * relative(c, g) + (1.0 - l) * p;
        }
        p
    }

    /// Natural-log probability of a gap sequence; the first gap contributes 1.
    pub fn sequence_logprob(&self, input: &ChunkInput, gaps: &[GapTag]) -> f64 {
        (1..gaps.len()).map(|i| self.prob(input, i, gaps[i]).ln()).sum()
    }

    /// Best valid gap sequence and its log-probability. Among equal scores
    /// the sequence that is smallest left to right in S < C < E < B < N wins.
    pub fn best_gaps(&self, input: &ChunkInput) -> (Vec<GapTag>, f64) {
        let n = input.len();
        if n == 0 {
            return (Vec::new(), 0.0);
        }
        // suffix[i][inside]: best score of gaps i.. given the word before gap i.
        let mut suffix = vec![[0.0f64; 2]; n + 1];
        for i in (1..n).rev() {
            for inside in [false, true] {
                suffix[i][usize::from(inside)] = GapTag::ALL
                    .iter()
                    .filter(|g| g.allowed_after(inside))
                    .map(|&g| self.prob(input, i, g).ln() + suffix[i + 1][usize::from(g.right_inside())])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        let mut gaps = Vec::with_capacity(n);
        let mut inside = false;
        let mut total = 0.0;
        for i in 0..n {
            let mut best: Option<(GapTag, f64, f64)> = None;
            for &g in GapTag::ALL.iter().filter(|g| g.allowed_after(inside)) {
                let own = if i == 0 { 0.0 } else { self.prob(input, i, g).ln() };
                let value = own + suffix[i + 1][usize::from(g.right_inside())];
                if best.is_none_or(|(_, v, _)| value > v) {
                    best = Some((g, value, own));
                }
            }
            let (g, _, own) = best.expect("every state admits a tag");
            gaps.push(g);
            total += own;
            inside = g.right_inside();
        }
        (gaps, total)
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        let join = |c: &Counts| c.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
        writeln!(out, "prior\t{}", join(&self.prior))?;
        for (k, c) in &self.pos {
            writeln!(out, "pos\t{k}\t{}", join(c))?;
        }
        for (k, c) in &self.full {
            writeln!(out, "full\t{k}\t{}", join(c))?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, ChunkError> {
        let mut model = BaseNpModel::default();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let err = |msg: &str| ChunkError::Format {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let counts: Vec<u64> = fields
                .last()
                .ok_or_else(|| err("empty line"))?
                .split(' ')
                .map(|x| x.parse().map_err(|_| err("bad count")))
                .collect::<Result<_, _>>()?;
            let counts: Counts = counts.try_into().map_err(|_| err("expected 5 counts"))?;
            let key = fields[1..fields.len() - 1].join("\t");
            match (fields[0], fields.len()) {
                ("prior", 2) => model.prior = counts,
                ("pos", 5) => {
                    model.pos.insert(key, counts);
                }
                ("full", 7) => {
                    model.full.insert(key, counts);
                }
                _ => return Err(err("unknown record")),
            }
        }
        Ok(model)
    }
}

/// A baseNP as inclusive token range plus its headword's token index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub head: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: usize) -> bool {
        (self.start..=self.end).contains(&token)
    }
}

/// NN*, PRP* and CD-style categories.
pub fn is_nominal(category: &str) -> bool {
    category.starts_with(['N', 'n']) || category.starts_with("PRP") || category == "CD"
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseNpAnalysis {
    /// One gap tag per non-punctuation word.
    pub gaps: Vec<GapTag>,
    pub spans: Vec<Span>,
    /// Token indices forming the reduced sentence, in order.
    pub reduced: Vec<usize>,
    pub logprob: f64,
}

impl BaseNpAnalysis {
    /// Builds spans and the reduced sentence from gap tags. The headword of
    /// a span is its rightmost nominal word, else its rightmost word.
    pub fn from_gaps(input: &ChunkInput, categories: &[&str], gaps: Vec<GapTag>, logprob: f64) -> Self {
        let spans: Vec<Span> = spans(&gaps)
            .into_iter()
            .map(|(a, b)| {
                let words = &input.positions[a..=b];
                let head = words
                    .iter()
                    .rev()
                    .find(|&&t| is_nominal(categories[t]))
                    .unwrap_or(&words[words.len() - 1]);
                Span {
                    start: words[0],
                    end: words[words.len() - 1],
                    head: *head,
                }
            })
            .collect();
        let reduced = (0..categories.len())
            .filter(|&t| spans.iter().all(|s| !s.contains(t) || s.head == t))
            .collect();
        BaseNpAnalysis {
            gaps,
            spans,
            reduced,
            logprob,
        }
    }

    pub fn reduced_words<'a>(&self, words: &[&'a str]) -> Vec<&'a str> {
        self.reduced.iter().map(|&t| words[t]).collect()
    }

    pub fn span_of(&self, token: usize) -> Option<&Span> {
        self.spans.iter().find(|s| s.contains(token))
    }
}

/// Tags baseNPs in a sentence of words with POS categories.
pub fn tag_basenps(model: &BaseNpModel, words: &[&str], categories: &[&str]) -> BaseNpAnalysis {
    let input = ChunkInput::from_tokens(words, categories);
    let (gaps, lp) = model.best_gaps(&input);
    BaseNpAnalysis::from_gaps(&input, categories, gaps, lp)
}

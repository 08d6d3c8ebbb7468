//! Gold chunk/dependency corpora.
//!
//! One token per line, tab-separated, blank line between sentences:
//!
//! ```text
//! index  word  pos  gap-tag-before  head-index  label
//! ```
//!
//! Indices start at 1 and head 0 is the root. Punctuation tokens carry `-`
//! as their gap tag, since gaps are defined between non-punctuation words.

use std::io::{self, BufRead, Write};

use crate::corpus::normalize::is_punctuation;

use super::basenp::{BaseNpAnalysis, BaseNpModel, ChunkInput, Rejection};
use super::deps::{LinkEvents, LinkModel};
use super::gap::{is_valid_sequence, GapTag};

#[derive(Debug, Clone, PartialEq)]
pub struct GoldToken {
    pub word: String,
    pub pos: String,
    pub gap: Option<GapTag>,
    /// 1-based head index; 0 for the root.
    pub head: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldSentence {
    pub tokens: Vec<GoldToken>,
}

impl GoldSentence {
    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.word.as_str()).collect()
    }

    pub fn tags(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.pos.as_str()).collect()
    }

    pub fn chunk_input(&self) -> ChunkInput {
        ChunkInput::from_tokens(&self.words(), &self.tags())
    }

    pub fn gaps(&self) -> Vec<GapTag> {
        self.tokens.iter().filter_map(|t| t.gap).collect()
    }

    /// The gold bracketing as an analysis (log-probability 0).
    pub fn analysis(&self) -> BaseNpAnalysis {
        BaseNpAnalysis::from_gaps(&self.chunk_input(), &self.tags(), self.gaps(), 0.0)
    }

    /// Gold links among the non-punctuation words of the reduced sentence.
    /// Heads inside a baseNP are redirected to its headword; links to
    /// punctuation or back into the dependent's own baseNP are dropped.
    pub fn link_events(&self) -> LinkEvents {
        let analysis = self.analysis();
        let mut ev = LinkEvents {
            categories: Vec::new(),
            positions: Vec::new(),
            heads: Vec::new(),
            labels: Vec::new(),
        };
        let content: Vec<(usize, usize)> = analysis
            .reduced
            .iter()
            .enumerate()
            .filter(|(_, &t)| !is_punctuation(&self.tokens[t].word))
            .map(|(pos, &t)| (pos, t))
            .collect();
        for &(pos, t) in &content {
            let tok = &self.tokens[t];
            let head = tok.head.checked_sub(1).and_then(|h| {
                let h = analysis.span_of(h).map_or(h, |s| s.head);
                content.iter().position(|&(_, c)| c == h && c != t)
            });
            ev.categories.push(tok.pos.clone());
            ev.positions.push(pos);
            ev.heads.push(head);
            ev.labels.push(tok.label.clone());
        }
        ev
    }

    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            let gap = t.gap.map_or_else(|| "-".to_string(), |g| g.to_string());
            writeln!(out, "{}\t{}\t{}\t{gap}\t{}\t{}", i + 1, t.word, t.pos, t.head, t.label)?;
        }
        writeln!(out)
    }
}

fn parse_sentence(lines: &[(usize, String)]) -> Result<GoldSentence, String> {
    let mut tokens = Vec::new();
    for (k, (lineno, line)) in lines.iter().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(format!("line {lineno}: expected 6 fields, found {}", f.len()));
        }
        if f[0].parse::<usize>().ok() != Some(k + 1) {
            return Err(format!("line {lineno}: index {:?} out of sequence", f[0]));
        }
        let punct = is_punctuation(f[1]);
        let gap = match (f[3], punct) {
            ("-", true) => None,
            (g, false) => Some(GapTag::parse(g).ok_or_else(|| format!("line {lineno}: bad gap tag {g:?}"))?),
            (g, true) => return Err(format!("line {lineno}: punctuation carries gap tag {g:?}")),
        };
        let head: usize = f[4].parse().map_err(|_| format!("line {lineno}: bad head {:?}", f[4]))?;
        if head > lines.len() || head == k + 1 {
            return Err(format!("line {lineno}: head {head} out of range"));
        }
        tokens.push(GoldToken {
            word: f[1].to_string(),
            pos: f[2].to_string(),
            gap,
            head,
            label: f[5].to_string(),
        });
    }
    let s = GoldSentence { tokens };
    if !is_valid_sequence(&s.gaps()) {
        return Err(format!(
            "line {}: gap tags do not form a valid bracketing",
            lines.first().map_or(0, |l| l.0)
        ));
    }
    Ok(s)
}

/// Reads a gold corpus, rejecting malformed sentences with diagnostics.
pub fn read_gold<R: BufRead>(input: R) -> io::Result<(Vec<GoldSentence>, Vec<Rejection>)> {
    let mut sentences = Vec::new();
    let mut rejected = Vec::new();
    let mut block: Vec<(usize, String)> = Vec::new();
    let mut index = 0;
    let mut flush = |block: &mut Vec<(usize, String)>, sentences: &mut Vec<GoldSentence>| {
        if block.is_empty() {
            return;
        }
        match parse_sentence(block) {
            Ok(s) => sentences.push(s),
            Err(reason) => {
                log::warn!("gold sentence {}: {reason}", index + 1);
                rejected.push(Rejection { sentence: index, reason });
            }
        }
        index += 1;
        block.clear();
    };
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            flush(&mut block, &mut sentences);
        } else {
            block.push((i + 1, line));
        }
    }
    flush(&mut block, &mut sentences);
    Ok((sentences, rejected))
}

pub fn train_basenp(sentences: &[GoldSentence]) -> (BaseNpModel, Vec<Rejection>) {
    let inputs: Vec<(ChunkInput, Vec<GapTag>)> = sentences.iter().map(|s| (s.chunk_input(), s.gaps())).collect();
    BaseNpModel::train(inputs.iter().map(|(i, g)| (i, g.as_slice())))
}

pub fn train_linkmodel(sentences: &[GoldSentence]) -> LinkModel {
    let events: Vec<LinkEvents> = sentences.iter().map(GoldSentence::link_events).collect();
    LinkModel::train(&events)
}

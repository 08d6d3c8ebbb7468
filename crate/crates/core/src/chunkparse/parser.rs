//! The reduced-sentence parser model: best tag sequence, best baseNP
//! bracketing, then the best dependency structure over the reduced sentence.

use std::sync::Arc;

use crate::corpus::normalize::is_punctuation;
use crate::corpus::TokenId;
use crate::scorer::{ScoreError, SentenceScorer};
use crate::taglm::JointTagModel;

use super::basenp::{tag_basenps, BaseNpAnalysis, BaseNpModel};
use super::deps::{assign_punct_heads, search_heads, DependencyAnalysis, Direction, LinkModel};

pub const DEFAULT_DEPENDENCY_BEAM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseResult {
    /// Best tag id per word.
    pub tags: Vec<usize>,
    /// Log joint probability of the words with the best tag sequence.
    pub tag_logprob: f64,
    pub basenp: BaseNpAnalysis,
    pub dependencies: DependencyAnalysis,
    pub dependency_logprob: f64,
    /// Sum of the three factors.
    pub logprob: f64,
}

pub struct ParserLm {
    tagger: Arc<JointTagModel>,
    chunker: BaseNpModel,
    links: LinkModel,
    beam: Option<usize>,
}

impl ParserLm {
    pub fn new(tagger: Arc<JointTagModel>, chunker: BaseNpModel, links: LinkModel) -> Self {
        ParserLm {
            tagger,
            chunker,
            links,
            beam: Some(DEFAULT_DEPENDENCY_BEAM),
        }
    }

    /// Partial assignments kept per step of the head search; `None` is exhaustive.
    pub fn with_beam(mut self, beam: Option<usize>) -> Self {
        self.beam = beam;
        self
    }

    pub fn analyze(&self, words: &[&str]) -> Result<ParseResult, ScoreError> {
        let ids: Vec<TokenId> = words.iter().map(|w| self.tagger.vocab().lookup(w)).collect();
        let tagged = self.tagger.score(&ids);
        if !tagged.best_logprob.is_finite() {
            return Err(ScoreError::Unscorable(format!("no tag sequence for {:?}", words.join(" "))));
        }
        let inventory = self.tagger.inventory();
        let categories: Vec<&str> = tagged
            .best_tags
            .iter()
            .map(|&t| inventory.get(t).map_or("", |tag| tag.category.as_str()))
            .collect();
        Ok(parse_tagged(
            &self.chunker,
            &self.links,
            self.beam,
            words,
            &categories,
            tagged.best_tags.clone(),
            tagged.best_logprob,
        ))
    }
}

/// Runs the chunker and head search on an already tagged sentence.
pub fn parse_tagged(
    chunker: &BaseNpModel,
    links: &LinkModel,
    beam: Option<usize>,
    words: &[&str],
    categories: &[&str],
    tags: Vec<usize>,
    tag_logprob: f64,
) -> ParseResult {
    let basenp = tag_basenps(chunker, words, categories);
    let reduced_words = basenp.reduced_words(words);
    let reduced_cats: Vec<&str> = basenp.reduced.iter().map(|&t| categories[t]).collect();
    let punct: Vec<bool> = reduced_words.iter().map(|w| is_punctuation(w)).collect();
    let (heads, dependency_logprob) = search_heads(links, &reduced_cats, &punct, beam);
    let mut dependencies = assign_punct_heads(&heads, &reduced_words);
    for (d, link) in dependencies.links.iter_mut().enumerate() {
        if link.rule.is_none() {
            link.label = match link.head {
                Some(h) => links.label(reduced_cats[d], reduced_cats[h], Direction::of(d, h)),
                None => "root".to_string(),
            };
        }
    }
    ParseResult {
        tags,
        tag_logprob,
        logprob: tag_logprob + basenp.logprob + dependency_logprob,
        basenp,
        dependencies,
        dependency_logprob,
    }
}

/// Only the sentence total is meaningful: every word position reports 0 and
/// the final position carries the whole log-probability.
impl SentenceScorer for ParserLm {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        let total = self.analyze(words)?.logprob;
        let mut out = vec![0.0; words.len()];
        out.push(total);
        Ok(out)
    }

    fn is_oov(&self, word: &str) -> bool {
        self.tagger.is_oov(word)
    }
}

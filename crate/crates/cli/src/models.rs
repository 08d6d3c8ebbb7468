//! Model specifications on the command line and their loaders.
//!
//! ```text
//! arpa:MODEL.arpa
//! countlm:COUNT_DIR,WEIGHTS.tsv
//! taglm:MODEL_DIR
//! parser:TAGLM_DIR,BASENP.tsv,LINKS.tsv
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lmrescore::chunkparse::{BaseNpModel, LinkModel, ParserLm};
use lmrescore::corpus::normalize::normalize_tokens;
use lmrescore::corpus::{NormalizationPolicy, ReadOptions, Vocabulary};
use lmrescore::countlm::{CountLm, JmWeights};
use lmrescore::smoothing::read_arpa;
use lmrescore::taglm::JointTagModel;
use lmrescore::{ScoreError, SegmentScorer, SentenceScorer};

use crate::artifacts::{open, read_count_dir, Run};
use crate::error::{CliError, Result};

pub const SPEC_HELP: &str = "Model specs: arpa:FILE | countlm:COUNT_DIR,WEIGHTS | taglm:DIR | parser:TAGLM_DIR,BASENP,LINKS";

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Arpa(PathBuf),
    CountLm { counts: PathBuf, weights: PathBuf },
    TagLm(PathBuf),
    Parser { taglm: PathBuf, basenp: PathBuf, links: PathBuf },
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| CliError::usage(format!("model spec {s:?} lacks a kind prefix. {SPEC_HELP}")))?;
        let paths: Vec<PathBuf> = rest.split(',').map(PathBuf::from).collect();
        let wrong = || CliError::usage(format!("model spec {s:?} has the wrong number of paths. {SPEC_HELP}"));
        Ok(match (kind, paths.as_slice()) {
            ("arpa", [p]) => ModelSpec::Arpa(p.clone()),
            ("countlm", [c, w]) => ModelSpec::CountLm {
                counts: c.clone(),
                weights: w.clone(),
            },
            ("taglm", [d]) => ModelSpec::TagLm(d.clone()),
            ("parser", [t, b, l]) => ModelSpec::Parser {
                taglm: t.clone(),
                basenp: b.clone(),
                links: l.clone(),
            },
            ("arpa" | "countlm" | "taglm" | "parser", _) => return Err(wrong()),
            _ => return Err(CliError::usage(format!("unknown model kind {kind:?}. {SPEC_HELP}"))),
        })
    }
}

/// Search settings for the structured models.
#[derive(Debug, Clone, Copy)]
pub struct Beams {
    pub tag: f64,
    /// `None` searches head assignments exhaustively.
    pub dependency: Option<usize>,
}

fn load_taglm(run: &mut Run, dir: &Path, beams: Beams) -> Result<JointTagModel> {
    run.input(dir)?;
    Ok(JointTagModel::load(dir).map_err(|e| CliError::from(e).in_file(dir))?.with_beam(beams.tag))
}

pub fn load(run: &mut Run, spec: &ModelSpec, beams: Beams) -> Result<Arc<dyn SentenceScorer>> {
    Ok(match spec {
        ModelSpec::Arpa(p) => {
            run.input(p)?;
            Arc::new(read_arpa(open(p)?).map_err(|e| CliError::from(e).in_file(p))?)
        }
        ModelSpec::CountLm { counts, weights } => {
            let mut vocab = Vocabulary::new();
            let table = read_count_dir(run, counts, None, &mut vocab, ReadOptions::default())?;
            run.input(weights)?;
            let w = JmWeights::read(open(weights)?).map_err(|e| CliError::from(e).in_file(weights))?;
            Arc::new(CountLm::new(Arc::new(table), Arc::new(vocab), w)?)
        }
        ModelSpec::TagLm(dir) => Arc::new(load_taglm(run, dir, beams)?),
        ModelSpec::Parser { taglm, basenp, links } => {
            let tagger = Arc::new(load_taglm(run, taglm, beams)?);
            run.input(basenp)?;
            let chunker = BaseNpModel::read(open(basenp)?).map_err(|e| CliError::from(e).in_file(basenp))?;
            run.input(links)?;
            let link_model = LinkModel::read(open(links)?).map_err(|e| CliError::from(e).in_file(links))?;
            Arc::new(ParserLm::new(tagger, chunker, link_model).with_beam(beams.dependency))
        }
    })
}

/// Applies text normalization to hypothesis tokens before scoring.
pub struct Normalized<'a> {
    pub inner: &'a dyn SegmentScorer,
    pub policy: NormalizationPolicy,
}

impl SegmentScorer for Normalized<'_> {
    fn segment_logprob(&self, segment: &str, words: &[&str]) -> std::result::Result<f64, ScoreError> {
        let tokens = normalize_tokens(&words.join(" "), &self.policy);
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        self.inner.segment_logprob(segment, &refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse() {
        assert_eq!(ModelSpec::parse("arpa:m.arpa").unwrap(), ModelSpec::Arpa("m.arpa".into()));
        assert_eq!(
            ModelSpec::parse("countlm:c,w.tsv").unwrap(),
            ModelSpec::CountLm {
                counts: "c".into(),
                weights: "w.tsv".into()
            }
        );
        assert!(ModelSpec::parse("arpa:a,b").is_err());
        assert!(ModelSpec::parse("neural:x").is_err());
        assert!(ModelSpec::parse("m.arpa").is_err());
    }
}

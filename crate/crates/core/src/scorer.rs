//! The interface every language model exposes to perplexity evaluation,
//! mixtures and N-best rescoring.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("cannot score sentence: {0}")]
    Unscorable(String),
}

/// A model that assigns natural-log probabilities to whole sentences.
///
/// `words` are normalized tokens without boundary markers. The returned
/// vector has one entry per word plus a final entry for `</s>`.
pub trait SentenceScorer: Send + Sync {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError>;

    /// Whether `word` is outside the model's vocabulary.
    fn is_oov(&self, _word: &str) -> bool {
        false
    }

    fn sentence_logprob(&self, words: &[&str]) -> Result<f64, ScoreError> {
        Ok(self.token_logprobs(words)?.iter().sum())
    }
}

/// A scorer that may adapt to the source segment a hypothesis belongs to.
/// Every [`SentenceScorer`] is one that ignores the segment.
pub trait SegmentScorer: Send + Sync {
    fn segment_logprob(&self, segment: &str, words: &[&str]) -> Result<f64, ScoreError>;
}

impl<T: SentenceScorer + ?Sized> SegmentScorer for T {
    fn segment_logprob(&self, _segment: &str, words: &[&str]) -> Result<f64, ScoreError> {
        self.sentence_logprob(words)
    }
}

impl<T: SentenceScorer + ?Sized> SentenceScorer for Box<T> {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        (**self).token_logprobs(words)
    }

    fn is_oov(&self, word: &str) -> bool {
        (**self).is_oov(word)
    }
}

impl<T: SentenceScorer + ?Sized> SentenceScorer for std::sync::Arc<T> {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        (**self).token_logprobs(words)
    }

    fn is_oov(&self, word: &str) -> bool {
        (**self).is_oov(word)
    }
}

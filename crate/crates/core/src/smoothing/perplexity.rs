use crate::scorer::{ScoreError, SentenceScorer};

/// How out-of-vocabulary words are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovMode {
    /// Score OOVs through the model's unknown-word symbol.
    #[default]
    Open,
    /// Leave OOV predictions out of the average and report them.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityReport {
    pub perplexity: f64,
    /// Natural-log likelihood summed over counted predictions.
    pub log_likelihood: f64,
    pub sentences: usize,
    /// Real tokens (excluding `</s>`).
    pub words: usize,
    /// Predictions that entered the average, `</s>` included.
    pub predicted: usize,
    pub oovs: usize,
    /// OOV predictions left out under [`OovMode::Skip`].
    pub skipped: usize,
    /// Predictions with zero probability, left out of the average.
    pub zero_probs: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerplexityError {
    #[error("no predicted tokens; perplexity is undefined")]
    NoTokens,
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// `exp(-(1/N) sum ln P)` over every predicted token, `</s>` included.
pub fn perplexity<S, I, T>(scorer: &S, corpus: I, mode: OovMode) -> Result<PerplexityReport, PerplexityError>
where
    S: SentenceScorer + ?Sized,
    I: IntoIterator<Item = T>,
    T: AsRef<[String]>,
{
    let mut report = PerplexityReport {
        perplexity: f64::NAN,
        log_likelihood: 0.0,
        sentences: 0,
        words: 0,
        predicted: 0,
        oovs: 0,
        skipped: 0,
        zero_probs: 0,
    };
    for sentence in corpus {
        let words: Vec<&str> = sentence.as_ref().iter().map(String::as_str).collect();
        let lps = scorer.token_logprobs(&words)?;
        report.sentences += 1;
        report.words += words.len();
        for (i, lp) in lps.iter().enumerate() {
            let oov = i < words.len() && scorer.is_oov(words[i]);
            if oov {
                report.oovs += 1;
                if mode == OovMode::Skip {
                    report.skipped += 1;
                    continue;
                }
            }
            if *lp == f64::NEG_INFINITY {
                report.zero_probs += 1;
                continue;
            }
            report.log_likelihood += lp;
            report.predicted += 1;
        }
    }
    if report.predicted == 0 {
        return Err(PerplexityError::NoTokens);
    }
    report.perplexity = (-report.log_likelihood / report.predicted as f64).exp();
    Ok(report)
}

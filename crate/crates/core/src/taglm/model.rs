//! Joint word/tag N-gram model.
//!
//! The history is the last n-1 (word, tag) pairs, each spelled as one
//! composite symbol. A tag model predicts `P(t_i | pairs)` and one word model
//! per tag predicts `P(w_i | pairs, t_i)`; both are modified-KN backoff models
//! over a shared composite vocabulary. Sentence end is predicted by a reserved
//! end tag that emits `</s>` with certainty, except for single-tag
//! inventories, where the lone tag emits `</s>` itself so the model reduces
//! exactly to a word N-gram.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use crate::corpus::{CountBuilder, CountSource, TokenId, Vocabulary, BOS_ID, EOS_ID, UNK_ID};
use crate::scorer::{ScoreError, SentenceScorer};
use crate::smoothing::{read_arpa, train_kn, write_arpa, ArpaError, BackoffModel, KnConfig, KnError, ModelVocabulary, FALLBACK_DISCOUNTS};

use super::corpus::{TaggedCorpus, TAG_SEPARATOR};
use super::tag::{TagError, TagInventory};

pub const DEFAULT_BEAM: f64 = 1e-4;
const TAG_PREFIX: &str = "<tag>";
const END_TAG: &str = "<tag>end";

#[derive(Debug, thiserror::Error)]
pub enum TagLmError {
    #[error("tagged corpus is empty")]
    EmptyCorpus,
    #[error("tag inventory is empty")]
    EmptyInventory,
    #[error("order must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error(transparent)]
    Kn(#[from] KnError),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Arpa(#[from] ArpaError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model directory is inconsistent: {0}")]
    Inconsistent(String),
}

fn pair_spelling(word: &str, tag: usize) -> String {
    format!("{word}{TAG_SEPARATOR}{tag}")
}

pub struct JointTagModel {
    n: usize,
    vocab: Arc<Vocabulary>,
    inventory: TagInventory,
    /// Composite symbol per tag slot; the end tag, when present, is last.
    tag_symbols: Vec<TokenId>,
    pairs: HashMap<(TokenId, usize), TokenId>,
    /// Predictable words other than `</s>` (always includes `<unk>`).
    words: HashSet<TokenId>,
    tag_model: BackoffModel,
    word_models: Vec<BackoffModel>,
    beam: f64,
}

impl std::fmt::Debug for JointTagModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JointTagModel")
            .field("order", &self.n)
            .field("tags", &self.inventory.len())
            .field("words", &self.words.len())
            .field("beam", &self.beam)
            .finish()
    }
}

/// Result of scoring one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedScore {
    /// Natural-log conditional probability of each word, then `</s>`.
    pub token_logprobs: Vec<f64>,
    pub logprob: f64,
    /// Most probable tag per word.
    pub best_tags: Vec<usize>,
    /// Joint log-probability of the words with `best_tags`.
    pub best_logprob: f64,
}

pub fn train_joint(corpus: &TaggedCorpus, n: usize) -> Result<JointTagModel, TagLmError> {
    if n < 2 {
        return Err(TagLmError::OrderTooSmall(n));
    }
    if corpus.inventory.is_empty() {
        return Err(TagLmError::EmptyInventory);
    }
    if corpus.is_empty() {
        return Err(TagLmError::EmptyCorpus);
    }
    let num_tags = corpus.inventory.len();
    let single = num_tags == 1;
    let mut vocab = corpus.vocab.clone();
    let mut tag_symbols: Vec<TokenId> = (0..num_tags).map(|t| vocab.intern(&format!("{TAG_PREFIX}{t}"))).collect();
    if !single {
        tag_symbols.push(vocab.intern(END_TAG));
    }
    let mut words: HashSet<TokenId> = corpus.sentences.iter().flatten().map(|&(w, _)| w).collect();
    words.insert(UNK_ID);
    let mut pairs: HashMap<(TokenId, usize), TokenId> = HashMap::new();
    for &(w, t) in corpus.sentences.iter().flatten() {
        pairs
            .entry((w, t))
            .or_insert_with(|| vocab.intern(&pair_spelling(corpus.vocab.resolve(w), t)));
    }

    let mut tag_counts = CountBuilder::new(n);
    let mut word_counts: Vec<CountBuilder> = (0..num_tags).map(|_| CountBuilder::new(n)).collect();
    let mut window: Vec<TokenId> = Vec::with_capacity(n);
    for sentence in corpus.sentences.iter().filter(|s| !s.is_empty()) {
        let mut history: Vec<TokenId> = vec![BOS_ID];
        let steps = sentence
            .iter()
            .map(|&(w, t)| (w, t))
            .chain(std::iter::once((EOS_ID, if single { 0 } else { num_tags })));
        for (w, slot) in steps {
            let ctx = &history[history.len().saturating_sub(n - 1)..];
            window.clear();
            window.extend_from_slice(ctx);
            window.push(tag_symbols[slot]);
            tag_counts.add_window(&window);
            if slot < num_tags {
                window.pop();
                window.push(w);
                word_counts[slot].add_window(&window);
            }
            if w != EOS_ID {
                history.push(pairs[&(w, slot)]);
            }
        }
    }

    let vocab = Arc::new(vocab);
    let tag_config = KnConfig {
        vocabulary: ModelVocabulary::Explicit(tag_symbols.clone()),
        discount_fallback: Some(FALLBACK_DISCOUNTS),
        ..KnConfig::default()
    };
    let tag_model = train_kn(&tag_counts.finish(CountSource::Corpus), vocab.clone(), None, &tag_config)?;
    let mut word_vocab: Vec<TokenId> = words.iter().copied().collect();
    if single {
        word_vocab.push(EOS_ID);
    }
    word_vocab.sort_unstable();
    let word_config = KnConfig {
        vocabulary: ModelVocabulary::Explicit(word_vocab),
        discount_fallback: Some(FALLBACK_DISCOUNTS),
        ..KnConfig::default()
    };
    let word_models = word_counts
        .into_iter()
        .map(|b| train_kn(&b.finish(CountSource::Corpus), vocab.clone(), None, &word_config))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(JointTagModel {
        n,
        vocab,
        inventory: corpus.inventory.clone(),
        tag_symbols,
        pairs,
        words,
        tag_model,
        word_models,
        beam: DEFAULT_BEAM,
    })
}

/// Forward/Viterbi state over truncated pair histories.
#[derive(Debug, Clone, Copy)]
struct Cell {
    alpha: f64,
    delta: f64,
}

/// Per position: state to (previous state, tag).
type Backpointers = BTreeMap<Vec<TokenId>, (Vec<TokenId>, usize)>;

struct Lattice<'a> {
    model: &'a JointTagModel,
    states: BTreeMap<Vec<TokenId>, Cell>,
    back: Vec<Backpointers>,
    delta_log_scale: f64,
    /// Share of the last step's mass that survived pruning.
    retained: f64,
}

impl<'a> Lattice<'a> {
    fn new(model: &'a JointTagModel) -> Self {
        let mut states = BTreeMap::new();
        states.insert(vec![BOS_ID], Cell { alpha: 1.0, delta: 1.0 });
        Lattice {
            model,
            states,
            back: Vec::new(),
            delta_log_scale: 0.0,
            retained: 1.0,
        }
    }

    /// Successor states after emitting `word`, with backpointers.
    #[allow(clippy::type_complexity)]
    fn expand(&self, word: TokenId) -> BTreeMap<Vec<TokenId>, (Cell, Vec<TokenId>, usize)> {
        let m = self.model;
        let mut next: BTreeMap<Vec<TokenId>, (Cell, Vec<TokenId>, usize)> = BTreeMap::new();
        for (state, cell) in &self.states {
            for slot in m.slots_for(word) {
                let lp = m.tag_logprob(state, slot) + m.word_logprob(state, slot, word);
                let p = lp.exp();
                if p == 0.0 {
                    continue;
                }
                let mut key = state.clone();
                key.push(m.pair_id(word, slot));
                if key.len() > m.n - 1 {
                    key.remove(0);
                }
                let a = cell.alpha * p;
                let d = cell.delta * p;
                match next.get_mut(&key) {
                    Some((c, prev, t)) => {
                        c.alpha += a;
                        if d > c.delta {
                            c.delta = d;
                            *prev = state.clone();
                            *t = slot;
                        }
                    }
                    None => {
                        next.insert(key, (Cell { alpha: a, delta: d }, state.clone(), slot));
                    }
                }
            }
        }
        next
    }

    fn mass(&self) -> f64 {
        self.states.values().map(|c| c.alpha).sum()
    }

    /// Natural-log P(word | words so far), without advancing.
    fn peek(&self, word: TokenId) -> f64 {
        let next: f64 = self.expand(word).values().map(|(c, _, _)| c.alpha).sum();
        (next * self.retained / self.mass()).ln()
    }

    /// Advances by `word` and returns its conditional log-probability. Under
    /// pruning these multiply out to the joint mass of the retained paths.
    fn advance(&mut self, word: TokenId) -> f64 {
        let before = self.mass();
        let mut next = self.expand(word);
        let after: f64 = next.values().map(|(c, _, _)| c.alpha).sum();
        if after == 0.0 {
            return f64::NEG_INFINITY;
        }
        if self.model.beam > 0.0 {
            let best = next.values().map(|(c, _, _)| c.alpha).fold(0.0, f64::max);
            let cut = best * self.model.beam;
            next.retain(|_, (c, _, _)| c.alpha >= cut);
        }
        let kept: f64 = next.values().map(|(c, _, _)| c.alpha).sum();
        let top = next.values().map(|(c, _, _)| c.delta).fold(0.0, f64::max);
        self.delta_log_scale += top.ln();
        let mut back = BTreeMap::new();
        self.states = next
            .into_iter()
            .map(|(k, (c, prev, t))| {
                back.insert(k.clone(), (prev, t));
                (
                    k,
                    Cell {
                        alpha: c.alpha / kept,
                        delta: c.delta / top,
                    },
                )
            })
            .collect();
        self.back.push(back);
        let lp = (after * self.retained / before).ln();
        self.retained = kept / after;
        lp
    }

    /// Best tag per emitted word (the final `</s>` step excluded).
    fn best_path(&self) -> Vec<usize> {
        let Some((mut key, _)) = self
            .states
            .iter()
            .fold(None::<(&Vec<TokenId>, f64)>, |acc, (k, c)| match acc {
                Some((_, d)) if d >= c.delta => acc,
                _ => Some((k, c.delta)),
            })
            .map(|(k, d)| (k.clone(), d))
        else {
            return Vec::new();
        };
        let mut tags = Vec::with_capacity(self.back.len());
        for step in self.back.iter().rev() {
            let (prev, t) = &step[&key];
            tags.push(*t);
            key = prev.clone();
        }
        tags.reverse();
        tags.pop();
        tags
    }
}

impl JointTagModel {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn inventory(&self) -> &TagInventory {
        &self.inventory
    }

    pub fn beam(&self) -> f64 {
        self.beam
    }

    /// Relative pruning threshold; 0 disables pruning.
    pub fn with_beam(mut self, threshold: f64) -> Self {
        self.beam = threshold.max(0.0);
        self
    }

    pub fn tag_model(&self) -> &BackoffModel {
        &self.tag_model
    }

    pub fn word_model(&self, tag: usize) -> &BackoffModel {
        &self.word_models[tag]
    }

    /// The reserved end-of-sentence tag slot, absent for single-tag inventories.
    pub fn end_slot(&self) -> Option<usize> {
        (self.tag_symbols.len() > self.inventory.len()).then_some(self.inventory.len())
    }

    /// Tag slots that can emit `word`.
    pub fn slots_for(&self, word: TokenId) -> std::ops::Range<usize> {
        match (word == EOS_ID, self.end_slot()) {
            (true, Some(end)) => end..end + 1,
            _ => 0..self.inventory.len(),
        }
    }

    /// Maps words outside the model to `<unk>`.
    pub fn map_word(&self, word: TokenId) -> TokenId {
        if word == EOS_ID || self.words.contains(&word) {
            word
        } else {
            UNK_ID
        }
    }

    /// Predictable symbols: every word, `<unk>` and `</s>`, sorted.
    pub fn predictable(&self) -> Vec<TokenId> {
        let mut v: Vec<TokenId> = self.words.iter().copied().chain(std::iter::once(EOS_ID)).collect();
        v.sort_unstable();
        v
    }

    /// History symbol for `(word, slot)`; unseen pairs share `<unk>`, which
    /// no factor model has as a context.
    pub fn pair_id(&self, word: TokenId, slot: usize) -> TokenId {
        self.pairs.get(&(self.map_word(word), slot)).copied().unwrap_or(UNK_ID)
    }

    /// `ln P(tag | history)`, `history` being pair symbols (starting with `<s>`).
    pub fn tag_logprob(&self, history: &[TokenId], slot: usize) -> f64 {
        self.tag_model.logprob(history, self.tag_symbols[slot])
    }

    /// `ln P(word | history, tag)`.
    pub fn word_logprob(&self, history: &[TokenId], slot: usize, word: TokenId) -> f64 {
        let word = self.map_word(word);
        if Some(slot) == self.end_slot() {
            return if word == EOS_ID { 0.0 } else { f64::NEG_INFINITY };
        }
        if word == EOS_ID && self.end_slot().is_some() {
            return f64::NEG_INFINITY;
        }
        self.word_models[slot].logprob(history, word)
    }

    /// `ln P(word | prefix)`, marginalizing over tag assignments of the prefix
    /// and of `word`.
    pub fn conditional_word_logprob(&self, prefix: &[TokenId], word: TokenId) -> f64 {
        let mut lattice = Lattice::new(self);
        for &w in prefix {
            if lattice.advance(w) == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
        }
        lattice.peek(word)
    }

    /// Scores `<s> words </s>` and recovers the most probable tag sequence.
    pub fn score(&self, words: &[TokenId]) -> TaggedScore {
        let mut lattice = Lattice::new(self);
        let mut token_logprobs = Vec::with_capacity(words.len() + 1);
        for &w in words.iter().chain(std::iter::once(&EOS_ID)) {
            let lp = lattice.advance(w);
            token_logprobs.push(lp);
            if lp == f64::NEG_INFINITY {
                token_logprobs.resize(words.len() + 1, f64::NEG_INFINITY);
                return TaggedScore {
                    token_logprobs,
                    logprob: f64::NEG_INFINITY,
                    best_tags: Vec::new(),
                    best_logprob: f64::NEG_INFINITY,
                };
            }
        }
        TaggedScore {
            logprob: token_logprobs.iter().sum(),
            token_logprobs,
            best_tags: lattice.best_path(),
            best_logprob: lattice.delta_log_scale,
        }
    }

    /// Writes the inventory and one ARPA file per factor model into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), TagLmError> {
        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| TagLmError::Io { path: p, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(io(&path))
        };
        self.inventory.write(create("tags.txt")?).map_err(io(&dir.join("tags.txt")))?;
        write_arpa(&self.tag_model, create("tag.arpa")?).map_err(io(&dir.join("tag.arpa")))?;
        for (t, m) in self.word_models.iter().enumerate() {
            let name = format!("word.{t}.arpa");
            write_arpa(m, create(&name)?).map_err(io(&dir.join(&name)))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TagLmError> {
        let open = |name: &str| {
            let path = dir.join(name);
            File::open(&path).map(BufReader::new).map_err(|source| TagLmError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let inventory = TagInventory::read(open("tags.txt")?)?;
        if inventory.is_empty() {
            return Err(TagLmError::EmptyInventory);
        }
        let tag_model = read_arpa(open("tag.arpa")?)?;
        let word_models = (0..inventory.len())
            .map(|t| Ok(read_arpa(open(&format!("word.{t}.arpa"))?)?))
            .collect::<Result<Vec<_>, TagLmError>>()?;

        let mut vocab = Vocabulary::new();
        for m in std::iter::once(&tag_model).chain(&word_models) {
            for (_, tok) in m.vocab().iter() {
                vocab.intern(tok);
            }
        }
        let num_tags = inventory.len();
        let mut tag_symbols: Vec<TokenId> = (0..num_tags).map(|t| vocab.intern(&format!("{TAG_PREFIX}{t}"))).collect();
        if num_tags > 1 {
            tag_symbols.push(vocab.intern(END_TAG));
        }
        let vocab = Arc::new(vocab);
        let tag_model = tag_model.rebase(vocab.clone());
        let word_models: Vec<BackoffModel> = word_models.into_iter().map(|m| m.rebase(vocab.clone())).collect();
        let mut pairs = HashMap::new();
        for (id, tok) in vocab.iter() {
            if let Some((w, t)) = tok.rsplit_once(TAG_SEPARATOR) {
                if let (Some(wid), Ok(t)) = (vocab.get(w), t.parse::<usize>()) {
                    pairs.insert((wid, t), id);
                }
            }
        }
        let mut words: HashSet<TokenId> = word_models.iter().flat_map(|m| m.predictable()).collect();
        words.remove(&EOS_ID);
        words.insert(UNK_ID);
        let n = tag_model.max_order();
        if word_models.iter().any(|m| m.max_order() != n) {
            return Err(TagLmError::Inconsistent("factor models differ in order".into()));
        }
        Ok(JointTagModel {
            n,
            vocab,
            inventory,
            tag_symbols,
            pairs,
            words,
            tag_model,
            word_models,
            beam: DEFAULT_BEAM,
        })
    }
}

impl SentenceScorer for JointTagModel {
    fn token_logprobs(&self, words: &[&str]) -> Result<Vec<f64>, ScoreError> {
        let ids: Vec<TokenId> = words.iter().map(|w| self.vocab.lookup(w)).collect();
        Ok(self.score(&ids).token_logprobs)
    }

    fn is_oov(&self, word: &str) -> bool {
        self.map_word(self.vocab.lookup(word)) == UNK_ID
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taglm::tag::StructuredTag;

    fn two_tag_corpus() -> TaggedCorpus {
        let mut inv = TagInventory::new();
        inv.intern(StructuredTag::simple("noun")).unwrap();
        inv.intern(StructuredTag::simple("verb")).unwrap();
        let text = "fish|||0 swim|||1\nfish|||1 fish|||0\nbirds|||0 fish|||1\nbirds|||0 swim|||1 fish|||0\n";
        TaggedCorpus::read(text.as_bytes(), inv).unwrap()
    }

    #[test]
    fn order_one_is_rejected() {
        assert!(matches!(train_joint(&two_tag_corpus(), 1), Err(TagLmError::OrderTooSmall(1))));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let c = TaggedCorpus::new(two_tag_corpus().inventory);
        assert!(matches!(train_joint(&c, 2), Err(TagLmError::EmptyCorpus)));
    }

    #[test]
    fn tag_distribution_is_proper() {
        let m = train_joint(&two_tag_corpus(), 2).unwrap();
        let fish = m.vocab().lookup("fish");
        let hist = [m.pair_id(fish, 0)];
        let total: f64 = (0..3).map(|s| m.tag_logprob(&hist, s).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn viterbi_recovers_a_plausible_tagging() {
        let m = train_joint(&two_tag_corpus(), 2).unwrap().with_beam(0.0);
        let v = m.vocab();
        let s = m.score(&[v.lookup("birds"), v.lookup("swim")]);
        assert_eq!(s.best_tags, vec![0, 1]);
        assert!(s.best_logprob <= s.logprob);
    }

    #[test]
    fn save_and_load_preserve_scores() {
        let m = train_joint(&two_tag_corpus(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = JointTagModel::load(dir.path()).unwrap();
        let words = ["birds", "swim", "fish"];
        let a = m.sentence_logprob(&words).unwrap();
        let b = back.sentence_logprob(&words).unwrap();
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

//! One function per subcommand.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use lmrescore::chunkparse::{self, read_gold, train_basenp, GoldSentence};
use lmrescore::corpus::normalize::normalize_tokens;
use lmrescore::corpus::{
    count_corpus_sharded, normalize, normalize_frozen, NGramCountTable, ReadOptions, TokenSequence, Vocabulary,
};
use lmrescore::countlm::{estimate_jm_weights, Buckets, EmConfig};
use lmrescore::mert::{self, MertProblem, SimplexParams};
use lmrescore::smoothing;
use lmrescore::rerank::{
    add_lm_feature, loglinear_select, read_nbest, write_nbest, write_selection, NBestList, WeightVector,
    DECODER_FEATURE, DEFAULT_FAILURE_PENALTY, DEFAULT_LIST_LIMIT, FIELD_SEPARATOR,
};
use lmrescore::smoothing::{
    estimate_alpha, extrapolate_count_of_counts, perplexity, write_arpa, CountOfCounts, Extrapolation,
    KnConfig, ModelVocabulary, OovMode, FALLBACK_DISCOUNTS,
};
use lmrescore::taglm::{mix_components, train_joint, MixMode, StaticMixture, TagInventory, TaggedCorpus};
use lmrescore::{SegmentScorer, SentenceScorer};

use crate::artifacts::{open, read_count_dir, read_lines, write_count_dir, write_dir, write_file, Run};
use crate::error::{CliError, Result};
use crate::models::{self, ModelSpec, Normalized};
use crate::{Common, Norm, Search};

pub const COUNT_HELP: &str = "\
Count directory: one file per order, {k}gms.txt or {k}gms.txt.gz, lines
\"tok tok ... tok<TAB>count\" sorted bytewise by the token field, plus source.txt
containing \"corpus\" for complete corpus counts (anything else, or no marker, is
treated as an external cutoff-filtered release). Text input: one sentence per
line, whitespace-tokenized, normalized (lowercase, numbers to $number) unless
disabled; empty lines are skipped with a warning.";

pub const TRAIN_KN_HELP: &str = "\
Output: ARPA text (\\data\\ header with ngram k=count lines, then \\k-grams:
sections of \"log10prob<TAB>tokens[<TAB>log10backoff]\" with six decimals, \\end\\).
--coc replaces the tallied counts-of-counts (format under coc-extrapolate --help),
which is how extrapolated singleton frequencies reach the discounts.";

pub const COC_HELP: &str = "\
Counts-of-counts file: \"order<TAB>c<TAB>F(c)<TAB>observed|extrapolated\" per line.
The law log F(c) - log F(c+1) = alpha / c is fit as a least-squares line through
the origin of the points (c, 1 / (log F(c) - log F(c+1))); alpha = 1 / slope.
plot-coc output: comment lines \"# order\", \"# alpha\", \"# slope\",
\"# residual_norm\" (name<TAB>value), then \"c<TAB>y\" per point.";

pub const COUNTLM_HELP: &str = "\
Weights file: \"order<TAB>bucket_lower<TAB>lambda_order ... lambda_1<TAB>lambda_0\" per
(order, bucket); lambda_0 weights the uniform floor. --trace writes
\"iteration<TAB>heldout_loglik\" (natural log), iteration 0 being the start.";

pub const TAGLM_HELP: &str = "\
Tagged corpus: one sentence per line, tokens \"word|||tag-id\".
Tag inventory: \"id|category|name=value,...|role:label:relation:modifiee;...|ordering\"
per line, ids dense from 0. Output directory: tags.txt, tag.arpa and one
word.{t}.arpa per tag.";

pub const GOLD_HELP: &str = "\
Gold corpus: one token per line, \"index<TAB>word<TAB>pos<TAB>gap<TAB>head<TAB>label\",
blank line between sentences; index from 1, head 0 = root, gap tag in S C E B N
(the boundary before the word), \"-\" for punctuation. Malformed sentences are
rejected individually with a diagnostic. Chunker output: records \"prior\",
\"pos\" and \"full\" with five gap-tag counts; link model output: records \"total\",
\"back\", \"full\" and \"label\".";

pub const SCORE_HELP: &str = "\
N-best file: \"segment ||| tokens ||| name=value ... ||| decoder_score\" per hypothesis,
segments contiguous, best first; a fifth (alignment) field is ignored. The decoder
score is exposed as the feature \"decoder\".
Model specs: arpa:FILE | countlm:COUNT_DIR,WEIGHTS | taglm:DIR | parser:TAGLM_DIR,BASENP,LINKS.
--mixture NAME=static:W1,W2:C1,C2 mixes models named by --lm or --component with
fixed weights; NAME=dynamic:W1,W2:C1,C2 fits weights per segment on its first
hypothesis (W are the fallback). Features are natural-log sentence probabilities.
An unscorable hypothesis gets its list's lowest score minus --penalty.";

pub const PPL_HELP: &str = "\
Output: \"name<TAB>value\" lines: perplexity, log_likelihood (natural log), sentences,
words, predicted (</s> included), oovs, skipped, zero_probs.
Model specs: arpa:FILE | countlm:COUNT_DIR,WEIGHTS | taglm:DIR | parser:TAGLM_DIR,BASENP,LINKS.";

pub const RERANK_HELP: &str = "\
Weights file: \"name<TAB>weight\" per line, '#' starts a comment; every feature of
every hypothesis needs a weight. Output: \"segment ||| tokens\" per segment.
--ranking writes \"segment<TAB>position<TAB>decoder_rank<TAB>score\" per hypothesis.";

pub const MERT_HELP: &str = "\
References: one line per segment in N-best order, tokens as given. Output: weights
file (\"name<TAB>weight\"). --log writes \"iteration<TAB>best_bleu<TAB>simplex_edge\".
The decoder weight stays at its initial value unless --free-decoder is given.";

pub const BLEU_HELP: &str = "\
Candidates: one line per segment, either plain tokens or \"segment ||| tokens\".
Output: \"name<TAB>value\" lines: bleu, matches_1..4, totals_1..4, candidate_length,
reference_length.";

fn start(command: &str, arguments: Vec<String>, common: &Common) -> Result<Run> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads as usize)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(Run::new(command, arguments, common.seed, common.threads as usize))
}

fn parse_range(s: &str) -> std::result::Result<(u64, u64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: u64 = lo.parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
    let hi: u64 = hi.parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
    if hi <= lo {
        return Err("range needs LO < HI".into());
    }
    Ok((lo, hi))
}

fn count_options(ratio: f64) -> ReadOptions {
    ReadOptions { max_reject_ratio: ratio }
}

#[derive(Args, Debug)]
pub struct CountInput {
    /// Count directory
    #[arg(long, value_name = "DIR")]
    counts: PathBuf,
    /// Highest order to read (default: every order present)
    #[arg(long)]
    order: Option<usize>,
    /// Fraction of malformed count lines tolerated per file
    #[arg(long, default_value_t = 0.01)]
    max_reject_ratio: f64,
}

impl CountInput {
    fn read(&self, run: &mut Run, vocab: &mut Vocabulary) -> Result<NGramCountTable> {
        read_count_dir(run, &self.counts, self.order, vocab, count_options(self.max_reject_ratio))
    }
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// Text file, one sentence per line (.gz accepted); repeatable
    #[arg(long = "text", required = true, value_name = "FILE")]
    texts: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Sentences per counting shard
    #[arg(long, default_value_t = 10_000)]
    shard_lines: usize,
    /// Gzip the count files
    #[arg(long)]
    gzip: bool,
    #[command(flatten)]
    norm: Norm,
    #[command(flatten)]
    common: Common,
}

pub fn count(a: CountArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("count", arguments, &a.common)?;
    if a.order == 0 {
        return Err(CliError::usage("--order must be at least 1"));
    }
    for p in &a.texts {
        run.input(p)?;
    }
    let policy = a.norm.policy();
    let mut vocab = Vocabulary::new();
    let mut sentences = Vec::new();
    let mut empty = 0usize;
    for p in &a.texts {
        for line in open(p)?.lines() {
            let line = line.map_err(|e| CliError::io(p, e))?;
            match normalize(&line, &policy, &mut vocab) {
                Ok(seq) => sentences.push(seq),
                Err(_) => empty += 1,
            }
        }
    }
    if empty > 0 {
        warn!("{empty} empty lines skipped");
    }
    let table = count_corpus_sharded(&sentences, a.order, a.shard_lines);
    write_count_dir(&mut run, &a.output, &table, &vocab, a.gzip)?;
    run.result("sentences", sentences.len());
    run.result("tokens", table.total_tokens());
    run.finish(a.common.manifest.as_deref())
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    /// Count directory to add in; repeatable
    #[arg(long = "input", required = true, value_name = "DIR")]
    inputs: Vec<PathBuf>,
    /// Highest order to merge (default: every order present in all inputs)
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Fraction of malformed count lines tolerated per file
    #[arg(long, default_value_t = 0.01)]
    max_reject_ratio: f64,
    /// Gzip the count files
    #[arg(long)]
    gzip: bool,
    #[command(flatten)]
    common: Common,
}

pub fn merge_counts(a: MergeArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("merge-counts", arguments, &a.common)?;
    for p in &a.inputs {
        run.input(p)?;
    }
    let order = a
        .order
        .unwrap_or_else(|| a.inputs.iter().map(|d| crate::artifacts::available_order(d)).min().unwrap_or(0));
    let mut vocab = Vocabulary::new();
    let mut merged: Option<NGramCountTable> = None;
    for dir in &a.inputs {
        let t = read_count_dir(&mut run, dir, Some(order), &mut vocab, count_options(a.max_reject_ratio))?;
        merged = Some(match merged {
            Some(m) => m.merge(&t),
            None => t,
        });
    }
    let merged = merged.expect("at least one input");
    write_count_dir(&mut run, &a.output, &merged, &vocab, a.gzip)?;
    run.result("tokens", merged.total_tokens());
    run.finish(a.common.manifest.as_deref())
}

fn read_cocs(run: &mut Run, path: &Path) -> Result<Vec<CountOfCounts>> {
    run.input(path)?;
    CountOfCounts::read_all(open(path)?).map_err(|e| CliError::from(e).in_file(path))
}

#[derive(Args, Debug)]
pub struct TrainKnArgs {
    #[command(flatten)]
    input: CountInput,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Counts-of-counts overriding the tallied ones, one block per order
    #[arg(long, value_name = "FILE")]
    coc: Option<PathBuf>,
    /// Use discounts 0.5, 1, 1.5 where the counts-of-counts cannot define them
    #[arg(long)]
    fallback_discounts: bool,
    /// Leave <unk> out of the model vocabulary
    #[arg(long)]
    closed_vocabulary: bool,
    /// Lower bound on a backoff weight, in probability space
    #[arg(long, default_value_t = 1e-10)]
    backoff_floor: f64,
    #[command(flatten)]
    common: Common,
}

pub fn train_kn(a: TrainKnArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("train-kn", arguments, &a.common)?;
    let mut vocab = Vocabulary::new();
    let table = a.input.read(&mut run, &mut vocab)?;
    let n = table.max_order();
    let cocs = match &a.coc {
        Some(p) => {
            let all = read_cocs(&mut run, p)?;
            let by_order: BTreeMap<usize, CountOfCounts> = all.into_iter().map(|c| (c.order(), c)).collect();
            let picked = (1..=n)
                .map(|k| {
                    by_order
                        .get(&k)
                        .cloned()
                        .ok_or_else(|| CliError::format(format!("{}: no counts-of-counts for order {k}", p.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(picked)
        }
        None => None,
    };
    let config = KnConfig {
        vocabulary: ModelVocabulary::FromCounts {
            open: !a.closed_vocabulary,
        },
        discount_fallback: a.fallback_discounts.then_some(FALLBACK_DISCOUNTS),
        backoff_floor: a.backoff_floor,
    };
    let model = smoothing::train_kn(&table, Arc::new(vocab), cocs.as_deref(), &config)?;
    write_file(&a.output, |out| write_arpa(&model, out))?;
    run.output(&a.output);
    for k in 1..=n {
        run.result(&format!("ngrams_{k}"), model.order_len(k));
    }
    run.finish(a.common.manifest.as_deref())
}

/// Counts-of-counts from a count directory or a file, orders ascending.
fn coc_input(
    run: &mut Run,
    counts: &Option<PathBuf>,
    coc: &Option<PathBuf>,
    order: Option<usize>,
    ratio: f64,
) -> Result<Vec<CountOfCounts>> {
    match (counts, coc) {
        (Some(dir), None) => {
            let mut vocab = Vocabulary::new();
            let table = read_count_dir(run, dir, order, &mut vocab, count_options(ratio))?;
            Ok(table.orders().iter().map(CountOfCounts::from_order_counts).collect())
        }
        (None, Some(p)) => {
            let all = read_cocs(run, p)?;
            Ok(all.into_iter().filter(|c| order.is_none_or(|n| c.order() <= n)).collect())
        }
        _ => Err(CliError::usage("give exactly one of --counts and --coc")),
    }
}

fn fit_range(coc: &CountOfCounts, given: Option<(u64, u64)>, cap: u64) -> Result<(u64, u64)> {
    given.or_else(|| coc.default_fit_range(cap)).ok_or_else(|| {
        CliError::numerical(format!(
            "order {}: no run of observed counts-of-counts to fit the law on",
            coc.order()
        ))
    })
}

#[derive(Args, Debug)]
pub struct CocArgs {
    /// Count directory to tally counts-of-counts from
    #[arg(long, value_name = "DIR")]
    counts: Option<PathBuf>,
    /// Counts-of-counts file instead of a count directory
    #[arg(long, value_name = "FILE")]
    coc: Option<PathBuf>,
    /// Highest order to process
    #[arg(long)]
    order: Option<usize>,
    /// Fraction of malformed count lines tolerated per file
    #[arg(long, default_value_t = 0.01)]
    max_reject_ratio: f64,
    /// Fit range LO:HI (default: longest observed run from max(2, smallest observed c), capped at 10)
    #[arg(long, value_parser = parse_range, value_name = "LO:HI")]
    fit: Option<(u64, u64)>,
    /// Use this alpha instead of fitting one
    #[arg(long)]
    alpha: Option<f64>,
    /// Lowest count value to fill in
    #[arg(long, default_value_t = 1)]
    target: u64,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn coc_extrapolate(a: CocArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("coc-extrapolate", arguments, &a.common)?;
    let cocs = coc_input(&mut run, &a.counts, &a.coc, a.order, a.max_reject_ratio)?;
    let mut filled = Vec::with_capacity(cocs.len());
    for coc in &cocs {
        let k = coc.order();
        if coc.smallest_observed().is_some_and(|s| s <= a.target) {
            info!("order {k}: F({}) already observed", a.target);
            filled.push(coc.clone());
            continue;
        }
        let alpha = match a.alpha {
            Some(alpha) => alpha,
            None => {
                let (lo, hi) = fit_range(coc, a.fit, 10)?;
                let fit = estimate_alpha(coc, lo, hi)?;
                info!("order {k}: alpha {} over c = {lo}..={hi}", fit.alpha);
                fit.alpha
            }
        };
        let (out, what) = extrapolate_count_of_counts(coc, alpha, a.target)?;
        run.result(&format!("alpha_{k}"), alpha);
        if let Extrapolation::Filled(m) = what {
            run.result(&format!("filled_{k}"), m);
        }
        filled.push(out);
    }
    write_file(&a.output, |out| {
        for c in &filled {
            c.write(&mut *out)?;
        }
        Ok(())
    })?;
    run.output(&a.output);
    run.finish(a.common.manifest.as_deref())
}

#[derive(Args, Debug)]
pub struct PlotCocArgs {
    /// Count directory to tally counts-of-counts from
    #[arg(long, value_name = "DIR")]
    counts: Option<PathBuf>,
    /// Counts-of-counts file instead of a count directory
    #[arg(long, value_name = "FILE")]
    coc: Option<PathBuf>,
    /// Order to plot (default: the highest available)
    #[arg(long)]
    order: Option<usize>,
    /// Fraction of malformed count lines tolerated per file
    #[arg(long, default_value_t = 0.01)]
    max_reject_ratio: f64,
    /// Count values LO:HI (default: longest observed run from max(2, smallest observed c), capped at 50)
    #[arg(long, value_parser = parse_range, value_name = "LO:HI")]
    range: Option<(u64, u64)>,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn plot_coc(a: PlotCocArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("plot-coc", arguments, &a.common)?;
    let cocs = coc_input(&mut run, &a.counts, &a.coc, a.order, a.max_reject_ratio)?;
    let coc = match a.order {
        Some(k) => cocs.iter().find(|c| c.order() == k),
        None => cocs.last(),
    }
    .ok_or_else(|| CliError::format("no counts-of-counts for the requested order"))?;
    let (lo, hi) = fit_range(coc, a.range, 50)?;
    let fit = estimate_alpha(coc, lo, hi)?;
    write_file(&a.output, |out| {
        writeln!(out, "# order\t{}", coc.order())?;
        writeln!(out, "# alpha\t{}", fit.alpha)?;
        writeln!(out, "# slope\t{}", fit.slope)?;
        writeln!(out, "# residual_norm\t{}", fit.residual_norm)?;
        for (c, y) in &fit.points {
            writeln!(out, "{c}\t{y}")?;
        }
        Ok(())
    })?;
    run.output(&a.output);
    run.result("alpha", fit.alpha);
    run.finish(a.common.manifest.as_deref())
}

fn read_text(path: &Path, policy: &lmrescore::corpus::NormalizationPolicy) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    let mut empty = 0usize;
    for line in read_lines(path)? {
        let toks = normalize_tokens(&line, policy);
        if toks.is_empty() {
            empty += 1;
        } else {
            out.push(toks);
        }
    }
    if empty > 0 {
        warn!("{}: {empty} empty lines skipped", path.display());
    }
    Ok(out)
}

#[derive(Args, Debug)]
pub struct CountLmArgs {
    #[command(flatten)]
    input: CountInput,
    /// Held-out text, one sentence per line
    #[arg(long, value_name = "FILE")]
    heldout: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Lower bounds of the history-count buckets, starting at 0
    #[arg(long, value_delimiter = ',')]
    buckets: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Relative held-out log-likelihood change that ends EM
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Held-out log-likelihood per EM iteration
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    norm: Norm,
    #[command(flatten)]
    common: Common,
}

pub fn train_countlm(a: CountLmArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("train-countlm", arguments, &a.common)?;
    let mut vocab = Vocabulary::new();
    let table = a.input.read(&mut run, &mut vocab)?;
    run.input(&a.heldout)?;
    let policy = a.norm.policy();
    let heldout: Vec<TokenSequence> = read_lines(&a.heldout)?
        .iter()
        .filter_map(|l| normalize_frozen(l, &policy, &vocab).ok())
        .collect();
    let buckets = if a.buckets.is_empty() {
        Buckets::default()
    } else {
        Buckets::new(a.buckets.clone())?
    };
    let config = EmConfig {
        buckets,
        max_iterations: a.max_iterations,
        tolerance: a.tolerance,
        initial: None,
    };
    let (weights, report) = estimate_jm_weights(Arc::new(table), Arc::new(vocab), &heldout, &config)?;
    write_file(&a.output, |out| weights.write(out))?;
    run.output(&a.output);
    if let Some(trace) = &a.trace {
        write_file(trace, |out| {
            for (i, ll) in report.log_likelihoods.iter().enumerate() {
                writeln!(out, "{i}\t{ll}")?;
            }
            Ok(())
        })?;
        run.output(trace);
    }
    run.result("iterations", report.iterations);
    run.result("converged", report.converged);
    run.result("heldout_events", report.events);
    if let Some(&ll) = report.log_likelihoods.last() {
        run.result("heldout_loglik", ll);
    }
    run.finish(a.common.manifest.as_deref())
}

#[derive(Args, Debug)]
pub struct TagLmArgs {
    /// Tagged corpus, tokens word|||tag-id
    #[arg(long, value_name = "FILE")]
    tagged: PathBuf,
    /// Tag inventory
    #[arg(long, value_name = "FILE")]
    tags: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn train_taglm(a: TagLmArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("train-taglm", arguments, &a.common)?;
    run.input(&a.tags)?;
    run.input(&a.tagged)?;
    let inventory = TagInventory::read(open(&a.tags)?).map_err(|e| CliError::from(e).in_file(&a.tags))?;
    let corpus = TaggedCorpus::read(open(&a.tagged)?, inventory).map_err(|e| CliError::from(e).in_file(&a.tagged))?;
    let model = train_joint(&corpus, a.order)?;
    write_dir(&a.output, |dir| Ok(model.save(dir)?))?;
    run.output(&a.output);
    run.result("sentences", corpus.sentences.len());
    run.result("tags", corpus.inventory.len());
    run.finish(a.common.manifest.as_deref())
}

#[derive(Args, Debug)]
pub struct GoldArgs {
    /// Gold chunk/dependency corpus
    #[arg(long, value_name = "FILE")]
    gold: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn load_gold(run: &mut Run, path: &Path) -> Result<Vec<GoldSentence>> {
    run.input(path)?;
    let (sentences, rejected) = read_gold(open(path)?).map_err(|e| CliError::io(path, e))?;
    run.result("rejected", rejected.len());
    if sentences.is_empty() {
        return Err(CliError::format(format!("{}: no usable gold sentences", path.display())));
    }
    run.result("sentences", sentences.len());
    Ok(sentences)
}

pub fn train_chunker(a: GoldArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("train-chunker", arguments, &a.common)?;
    let sentences = load_gold(&mut run, &a.gold)?;
    let (model, rejected) = train_basenp(&sentences);
    for r in &rejected {
        warn!("training sentence {} rejected: {}", r.sentence + 1, r.reason);
    }
    write_file(&a.output, |out| model.write(out))?;
    run.output(&a.output);
    run.finish(a.common.manifest.as_deref())
}

pub fn train_linkmodel(a: GoldArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("train-linkmodel", arguments, &a.common)?;
    let sentences = load_gold(&mut run, &a.gold)?;
    let model = chunkparse::train_linkmodel(&sentences);
    write_file(&a.output, |out| model.write(out))?;
    run.output(&a.output);
    run.finish(a.common.manifest.as_deref())
}

fn read_lists(run: &mut Run, path: &Path, limit: usize, allow_empty: bool) -> Result<Vec<NBestList>> {
    run.input(path)?;
    let opts = lmrescore::rerank::ReadOptions { limit, allow_empty };
    let lists = read_nbest(open(path)?, &opts).map_err(|e| CliError::from(e).in_file(path))?;
    if lists.is_empty() {
        return Err(CliError::format(format!("{}: no hypotheses", path.display())));
    }
    Ok(lists)
}

fn named(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .filter(|(n, _)| !n.is_empty())
        .ok_or_else(|| CliError::usage(format!("expected NAME=VALUE, got {s:?}")))
}

fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|w| w.parse::<f64>().map_err(|_| CliError::usage(format!("bad weight {w:?}"))))
        .collect()
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// N-best file to extend
    #[arg(long, value_name = "FILE")]
    nbest: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Feature from one model; repeatable
    #[arg(long = "lm", value_name = "NAME=SPEC")]
    lms: Vec<String>,
    /// Model usable by --mixture without becoming a feature; repeatable
    #[arg(long = "component", value_name = "NAME=SPEC")]
    components: Vec<String>,
    /// Mixture feature; repeatable
    #[arg(long = "mixture", value_name = "NAME=MODE:W1,..:C1,..")]
    mixtures: Vec<String>,
    /// Distance below the list's lowest score given to unscorable hypotheses
    #[arg(long, default_value_t = DEFAULT_FAILURE_PENALTY)]
    penalty: f64,
    /// Hypotheses kept per segment; the rest are dropped with a warning
    #[arg(long, default_value_t = DEFAULT_LIST_LIMIT)]
    limit: usize,
    /// Accept hypotheses with no tokens
    #[arg(long)]
    allow_empty: bool,
    /// Unscorable hypotheses: segment TAB rank TAB substituted TAB reason
    #[arg(long, value_name = "FILE")]
    failures: Option<PathBuf>,
    #[command(flatten)]
    search: Search,
    #[command(flatten)]
    norm: Norm,
    #[command(flatten)]
    common: Common,
}

pub fn score(a: ScoreArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("score", arguments, &a.common)?;
    let mut lists = read_lists(&mut run, &a.nbest, a.limit, a.allow_empty)?;
    if a.lms.is_empty() && a.mixtures.is_empty() {
        return Err(CliError::usage("nothing to score: give --lm or --mixture"));
    }
    let beams = a.search.beams();
    let mut loaded: HashMap<String, Arc<dyn SentenceScorer>> = HashMap::new();
    let mut features: Vec<(String, Box<dyn SegmentScorer>)> = Vec::new();
    for (spec, is_feature) in a.components.iter().map(|s| (s, false)).chain(a.lms.iter().map(|s| (s, true))) {
        let (name, spec) = named(spec)?;
        if loaded.contains_key(name) {
            return Err(CliError::usage(format!("model name {name:?} used twice")));
        }
        let model = models::load(&mut run, &ModelSpec::parse(spec)?, beams)?;
        if is_feature {
            features.push((name.to_string(), Box::new(model.clone())));
        }
        loaded.insert(name.to_string(), model);
    }
    let policy = a.norm.policy();
    for m in &a.mixtures {
        let (name, rest) = named(m)?;
        let parts: Vec<&str> = rest.splitn(3, ':').collect();
        let [mode, weights, comps] = parts[..] else {
            return Err(CliError::usage(format!("mixture {m:?} is not NAME=MODE:WEIGHTS:COMPONENTS")));
        };
        let weights = parse_weights(weights)?;
        let components = comps
            .split(',')
            .map(|c| {
                loaded
                    .get(c)
                    .cloned()
                    .ok_or_else(|| CliError::usage(format!("mixture {name:?}: unknown component {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mode = match mode {
            "static" => MixMode::Static(weights),
            "dynamic" => MixMode::Dynamic {
                fallback: weights,
                one_best: lists
                    .iter()
                    .filter_map(|l| l.hypotheses.first())
                    .map(|h| (h.segment.clone(), normalize_tokens(&h.tokens.join(" "), &policy)))
                    .collect(),
            },
            other => return Err(CliError::usage(format!("mixture mode {other:?} is neither static nor dynamic"))),
        };
        features.push((name.to_string(), mix_components(components, mode)?));
    }
    let mut failures = Vec::new();
    for (name, scorer) in &features {
        let wrapped = Normalized {
            inner: scorer.as_ref(),
            policy,
        };
        failures.extend(add_lm_feature(&mut lists, &wrapped, name, a.penalty)?);
    }
    write_file(&a.output, |out| write_nbest(out, &lists))?;
    run.output(&a.output);
    if let Some(path) = &a.failures {
        write_file(path, |out| {
            for f in &failures {
                writeln!(out, "{}\t{}\t{}\t{}", f.segment, f.rank, f.substituted, f.reason)?;
            }
            Ok(())
        })?;
        run.output(path);
    }
    run.result("segments", lists.len());
    run.result("failures", failures.len());
    run.finish(a.common.manifest.as_deref())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Oov {
    /// Score OOVs through <unk>
    Open,
    /// Leave OOV predictions out of the average
    Skip,
}

#[derive(Args, Debug)]
pub struct PplArgs {
    /// Model spec; repeat for a static mixture
    #[arg(long = "model", required = true, value_name = "SPEC")]
    models: Vec<String>,
    /// Mixture weights, one per model (default: uniform)
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// Text, one sentence per line
    #[arg(long, value_name = "FILE")]
    text: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "open")]
    oov: Oov,
    #[command(flatten)]
    search: Search,
    #[command(flatten)]
    norm: Norm,
    #[command(flatten)]
    common: Common,
}

pub fn ppl(a: PplArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("ppl", arguments, &a.common)?;
    run.input(&a.text)?;
    let specs = a.models.iter().map(|s| ModelSpec::parse(s)).collect::<Result<Vec<_>>>()?;
    let mut components = Vec::with_capacity(specs.len());
    for spec in &specs {
        components.push(models::load(&mut run, spec, a.search.beams())?);
    }
    let scorer: Arc<dyn SentenceScorer> = if components.len() == 1 && a.weights.is_empty() {
        components.pop().expect("one model")
    } else {
        let weights = if a.weights.is_empty() {
            vec![1.0 / components.len() as f64; components.len()]
        } else {
            a.weights.clone()
        };
        Arc::new(StaticMixture::new(components, weights)?)
    };
    let text = read_text(&a.text, &a.norm.policy())?;
    let mode = match a.oov {
        Oov::Open => OovMode::Open,
        Oov::Skip => OovMode::Skip,
    };
    let r = perplexity(scorer.as_ref(), &text, mode)?;
    write_file(&a.output, |out| {
        writeln!(out, "perplexity\t{}", r.perplexity)?;
        writeln!(out, "log_likelihood\t{}", r.log_likelihood)?;
        writeln!(out, "sentences\t{}", r.sentences)?;
        writeln!(out, "words\t{}", r.words)?;
        writeln!(out, "predicted\t{}", r.predicted)?;
        writeln!(out, "oovs\t{}", r.oovs)?;
        writeln!(out, "skipped\t{}", r.skipped)?;
        writeln!(out, "zero_probs\t{}", r.zero_probs)
    })?;
    run.output(&a.output);
    run.result("perplexity", r.perplexity);
    run.finish(a.common.manifest.as_deref())
}

fn read_weights(run: &mut Run, path: &Path) -> Result<WeightVector> {
    run.input(path)?;
    WeightVector::read(open(path)?).map_err(|e| CliError::from(e).in_file(path))
}

#[derive(Args, Debug)]
pub struct RerankArgs {
    #[arg(long, value_name = "FILE")]
    nbest: PathBuf,
    #[arg(long, value_name = "FILE")]
    weights: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Full ranking of every list
    #[arg(long, value_name = "FILE")]
    ranking: Option<PathBuf>,
    /// Hypotheses kept per segment; the rest are dropped with a warning
    #[arg(long, default_value_t = DEFAULT_LIST_LIMIT)]
    limit: usize,
    /// Accept hypotheses with no tokens
    #[arg(long)]
    allow_empty: bool,
    #[command(flatten)]
    common: Common,
}

pub fn rerank(a: RerankArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("rerank", arguments, &a.common)?;
    let lists = read_lists(&mut run, &a.nbest, a.limit, a.allow_empty)?;
    let weights = read_weights(&mut run, &a.weights)?;
    let rankings = lists
        .par_iter()
        .map(|l| loglinear_select(l, &weights))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let chosen: Vec<usize> = rankings.iter().map(|r| r.best().expect("lists are non-empty")).collect();
    write_file(&a.output, |out| write_selection(out, &lists, &chosen))?;
    run.output(&a.output);
    if let Some(path) = &a.ranking {
        write_file(path, |out| {
            for (list, r) in lists.iter().zip(&rankings) {
                for (pos, &i) in r.order.iter().enumerate() {
                    writeln!(out, "{}\t{pos}\t{}\t{}", list.segment, list.hypotheses[i].rank, r.scores[i])?;
                }
            }
            Ok(())
        })?;
        run.output(path);
    }
    let changed = chosen.iter().filter(|&&i| i != 0).count();
    run.result("segments", lists.len());
    run.result("changed_from_first", changed);
    run.finish(a.common.manifest.as_deref())
}

fn read_references(run: &mut Run, path: &Path) -> Result<Vec<Vec<String>>> {
    run.input(path)?;
    Ok(read_lines(path)?
        .iter()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

#[derive(Args, Debug)]
pub struct MertArgs {
    #[arg(long, value_name = "FILE")]
    nbest: PathBuf,
    /// References, one line per segment in N-best order
    #[arg(long, value_name = "FILE")]
    references: PathBuf,
    /// Optimized weights
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Starting weights (default: decoder 1, every other feature 0)
    #[arg(long, value_name = "FILE")]
    initial: Option<PathBuf>,
    /// Per-iteration best BLEU and simplex size
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Simplex runs: one from the starting weights, the rest from seeded perturbations
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Simplex iterations per run
    #[arg(long, default_value_t = 300)]
    max_iterations: usize,
    /// Re-inflations of a converged simplex
    #[arg(long, default_value_t = 3)]
    reinflations: usize,
    /// Initial simplex edge, scaled by max(1, |weight|)
    #[arg(long, default_value_t = 1.0)]
    initial_step: f64,
    /// Half-width of restart perturbations, scaled by max(1, |weight|)
    #[arg(long, default_value_t = 1.0)]
    perturbation: f64,
    /// Simplex size at which a run has converged
    #[arg(long, default_value_t = 1e-4)]
    min_edge: f64,
    /// Optimize the decoder weight as well
    #[arg(long)]
    free_decoder: bool,
    /// Hypotheses kept per segment; the rest are dropped with a warning
    #[arg(long, default_value_t = DEFAULT_LIST_LIMIT)]
    limit: usize,
    /// Accept hypotheses with no tokens
    #[arg(long)]
    allow_empty: bool,
    #[command(flatten)]
    common: Common,
}

pub fn mert(a: MertArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("mert", arguments, &a.common)?;
    let lists = read_lists(&mut run, &a.nbest, a.limit, a.allow_empty)?;
    let references = read_references(&mut run, &a.references)?;
    let initial = match &a.initial {
        Some(p) => read_weights(&mut run, p)?,
        None => {
            let names: Vec<String> = WeightVector::covering(&lists, 0.0).names().map(String::from).collect();
            WeightVector::new(
                names
                    .into_iter()
                    .map(|n| {
                        let w = if n == DECODER_FEATURE { 1.0 } else { 0.0 };
                        (n, w)
                    })
                    .collect(),
            )?
        }
    };
    let params = SimplexParams {
        initial_step: a.initial_step,
        min_edge: a.min_edge,
        max_iterations: a.max_iterations,
        reinflations: a.reinflations,
        restarts: a.restarts,
        perturbation: a.perturbation,
        seed: a.common.seed,
        fixed: (!a.free_decoder).then(|| DECODER_FEATURE.to_string()),
        ..SimplexParams::default()
    };
    let result = mert::optimize(&MertProblem {
        lists,
        references,
        initial,
        params,
    })?;
    if result.degenerate {
        warn!("every list has a single distinct hypothesis; BLEU cannot change");
    }
    write_file(&a.output, |out| result.weights.write(out))?;
    run.output(&a.output);
    if let Some(log) = &a.log {
        write_file(log, |out| mert::write_log(out, &result.trace))?;
        run.output(log);
    }
    run.result("bleu", result.bleu);
    run.result("initial_bleu", result.initial_bleu);
    run.result("restart_bleu", result.restart_bleu.clone());
    run.result("degenerate", result.degenerate);
    run.finish(a.common.manifest.as_deref())
}

#[derive(Args, Debug)]
pub struct BleuArgs {
    #[arg(long, value_name = "FILE")]
    candidates: PathBuf,
    /// References, one line per segment
    #[arg(long, value_name = "FILE")]
    references: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn bleu(a: BleuArgs, arguments: Vec<String>) -> Result<()> {
    let mut run = start("bleu", arguments, &a.common)?;
    run.input(&a.candidates)?;
    let separator = FIELD_SEPARATOR.trim();
    let candidates: Vec<Vec<String>> = read_lines(&a.candidates)?
        .iter()
        .map(|l| {
            let toks = l.split_once(separator).map_or(l.as_str(), |(_, t)| t);
            toks.split_whitespace().map(String::from).collect()
        })
        .collect();
    let references = read_references(&mut run, &a.references)?;
    let (score, stats) = mert::bleu(&candidates, &references)?;
    write_file(&a.output, |out| {
        writeln!(out, "bleu\t{score}")?;
        for (k, m) in stats.matches.iter().enumerate() {
            writeln!(out, "matches_{}\t{m}", k + 1)?;
        }
        for (k, t) in stats.totals.iter().enumerate() {
            writeln!(out, "totals_{}\t{t}", k + 1)?;
        }
        writeln!(out, "candidate_length\t{}", stats.candidate_len)?;
        writeln!(out, "reference_length\t{}", stats.reference_len)
    })?;
    run.output(&a.output);
    run.result("bleu", score);
    run.finish(a.common.manifest.as_deref())
}

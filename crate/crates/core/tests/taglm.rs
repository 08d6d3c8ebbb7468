mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::kn_oracle::KnOracle;
use lmrescore::corpus::{count_corpus, TokenId, TokenSequence, Vocabulary, BOS_ID, EOS_ID, UNK_ID};
use lmrescore::smoothing::{train_kn, BackoffModel, KnConfig, FALLBACK_DISCOUNTS};
use lmrescore::taglm::{
    train_joint, DynamicMixture, JointTagModel, MixtureEmConfig, StaticMixture, StructuredTag, TagInventory,
    TaggedCorpus,
};
use lmrescore::SentenceScorer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inventory(tags: usize) -> TagInventory {
    let mut inv = TagInventory::new();
    for t in 0..tags {
        inv.intern(StructuredTag::simple(&format!("c{t}"))).unwrap();
    }
    inv
}

fn corpus(text: &str, tags: usize) -> TaggedCorpus {
    TaggedCorpus::read(text.as_bytes(), inventory(tags)).unwrap()
}

/// Tagged sentences where each word prefers one tag but not always.
fn random_tagged(seed: u64, sentences: usize, words: usize, tags: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..sentences {
        let len = rng.gen_range(1..6);
        let toks: Vec<String> = (0..len)
            .map(|_| {
                let w = rng.gen_range(0..words);
                let t = if rng.gen_bool(0.7) { w % tags } else { rng.gen_range(0..tags) };
                format!("v{w}|||{t}")
            })
            .collect();
        out.push_str(&toks.join(" "));
        out.push('\n');
    }
    out
}

/// Joint probability of `words` (with `</s>` last) under one tag sequence.
fn joint(m: &JointTagModel, words: &[TokenId], tags: &[usize]) -> f64 {
    let mut history = vec![BOS_ID];
    let mut lp = 0.0;
    for (&w, &t) in words.iter().zip(tags) {
        let ctx = &history[history.len().saturating_sub(m.order() - 1)..];
        lp += m.tag_logprob(ctx, t) + m.word_logprob(ctx, t, w);
        history.push(m.pair_id(w, t));
    }
    lp.exp()
}

/// Sum of the joint over every tag assignment.
fn marginal(m: &JointTagModel, words: &[TokenId]) -> f64 {
    let choices: Vec<Vec<usize>> = words.iter().map(|&w| m.slots_for(w).collect()).collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; words.len()];
    loop {
        let tags: Vec<usize> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        total += joint(m, words, &tags);
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn ids(m: &JointTagModel, words: &[&str]) -> Vec<TokenId> {
    words.iter().map(|w| m.vocab().lookup(w)).collect()
}

#[test]
fn marginals_match_enumeration() {
    let fixtures = [(2, 2, 1u64), (3, 2, 2), (3, 3, 3), (2, 3, 4)];
    for (tags, n, seed) in fixtures {
        let c = corpus(&random_tagged(seed, 60, 6, tags), tags);
        let m = train_joint(&c, n).unwrap().with_beam(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for _ in 0..6 {
            let len = rng.gen_range(1..=5);
            let sentence: Vec<String> = (0..len).map(|_| format!("v{}", rng.gen_range(0..7))).collect();
            let refs: Vec<&str> = sentence.iter().map(String::as_str).collect();
            let words = ids(&m, &refs);
            let mut predictable = m.predictable();
            predictable.truncate(4);
            for i in 0..len {
                let prefix = &words[..i];
                let base = marginal(&m, prefix);
                for &w in predictable.iter().chain([&words[i], &EOS_ID]) {
                    let mut ext = prefix.to_vec();
                    ext.push(w);
                    let want = marginal(&m, &ext) / base;
                    let got = m.conditional_word_logprob(prefix, w).exp();
                    assert!((got - want).abs() < 1e-12, "tags {tags} n {n}: {got} vs {want}");
                }
            }
            let mut full = words.clone();
            full.push(EOS_ID);
            let score = m.score(&words);
            assert!((score.logprob.exp() - marginal(&m, &full)).abs() < 1e-12);
            let sum: f64 = (0..=len)
                .map(|i| {
                    let w = if i == len { EOS_ID } else { words[i] };
                    m.conditional_word_logprob(&words[..i], w)
                })
                .sum();
            assert!((sum - score.logprob).abs() < 1e-9);
        }
    }
}

#[test]
fn conditional_distribution_is_normalized() {
    let c = corpus(&random_tagged(9, 80, 8, 3), 3);
    let m = train_joint(&c, 3).unwrap().with_beam(0.0);
    let words = m.predictable();
    for prefix in [vec![], ids(&m, &["v1"]), ids(&m, &["v2", "v0", "v5"]), ids(&m, &["zz", "v3"])] {
        let total: f64 = words.iter().map(|&w| m.conditional_word_logprob(&prefix, w).exp()).sum();
        assert!((total - 1.0).abs() < 1e-6, "prefix {prefix:?} sums to {total}");
    }
}

#[test]
fn length_two_sentence_mass_matches_enumeration() {
    let c = corpus("x|||0 y|||1\ny|||1 x|||0\nx|||0 x|||1 y|||1\ny|||0\nx|||1 y|||0 y|||1\n", 2);
    let m = train_joint(&c, 2).unwrap().with_beam(0.0);
    let words: Vec<TokenId> = m.predictable().into_iter().filter(|&w| w != EOS_ID).collect();
    let mut scored = 0.0;
    let mut brute = 0.0;
    for &a in &words {
        for &b in &words {
            scored += m.score(&[a, b]).logprob.exp();
            brute += marginal(&m, &[a, b, EOS_ID]);
        }
    }
    assert!(scored > 0.0 && scored < 1.0);
    assert!((scored - brute).abs() < 1e-12);
}

fn plain_lines(seed: u64, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..8);
            (0..len)
                .map(|_| {
                    let r: f64 = rng.gen();
                    format!("w{}", (r * r * 30.0) as usize)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn word_model(lines: &[String], n: usize) -> BackoffModel {
    let mut v = Vocabulary::new();
    let seqs: Vec<TokenSequence> = lines
        .iter()
        .map(|l| TokenSequence::bounded(&l.split_whitespace().map(|t| v.intern(t)).collect::<Vec<_>>()))
        .collect();
    let config = KnConfig {
        discount_fallback: Some(FALLBACK_DISCOUNTS),
        ..KnConfig::default()
    };
    train_kn(&count_corpus(seqs.iter(), n), Arc::new(v), None, &config).unwrap()
}

#[test]
fn single_tag_inventory_is_a_word_model() {
    let lines = plain_lines(4, 300);
    let tagged: String = lines
        .iter()
        .map(|l| l.split_whitespace().map(|w| format!("{w}|||0")).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    for n in [2, 3] {
        let m = train_joint(&corpus(&tagged, 1), n).unwrap().with_beam(0.0);
        let wm = word_model(&lines, n);
        for s in plain_lines(99, 40).iter().chain(["zz w1 qq".to_string()].iter()) {
            let words: Vec<&str> = s.split_whitespace().collect();
            let a = m.token_logprobs(&words).unwrap();
            let b = wm.token_logprobs(&words).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x.exp() - y.exp()).abs() < 1e-9, "n {n}: {x} vs {y} in {s:?}");
            }
        }
    }
}

#[test]
fn factor_models_match_direct_kn() {
    let text = "x|||0 y|||1\ny|||1 x|||0\nx|||0 x|||1 y|||1\ny|||0\nx|||1 y|||0 y|||1\n";
    let c = corpus(text, 2);
    let m = train_joint(&c, 2).unwrap();
    let fallback = Some([FALLBACK_DISCOUNTS.d1, FALLBACK_DISCOUNTS.d2, FALLBACK_DISCOUNTS.d3_plus]);

    let mut tag_events = Vec::new();
    let mut word_events: Vec<Vec<(Vec<String>, String)>> = vec![Vec::new(), Vec::new()];
    for line in text.lines() {
        let mut hist = vec!["<s>".to_string()];
        for tok in line.split_whitespace() {
            let (w, t) = tok.split_once("|||").unwrap();
            tag_events.push((hist.clone(), format!("<tag>{t}")));
            word_events[t.parse::<usize>().unwrap()].push((hist.clone(), w.to_string()));
            hist.push(tok.to_string());
        }
        tag_events.push((hist, "<tag>end".to_string()));
    }
    let tag_vocab = vec!["<tag>0".to_string(), "<tag>1".into(), "<tag>end".into()];
    let tag_oracle = KnOracle::from_events(&tag_events, 2, tag_vocab.clone(), fallback);
    let word_vocab = vec!["<unk>".to_string(), "x".into(), "y".into()];
    let histories = ["<s>", "x|||0", "x|||1", "y|||0", "y|||1"];
    let v = m.vocab();
    for h in histories {
        let hid = [v.lookup(h)];
        for (slot, sym) in tag_vocab.iter().enumerate() {
            let got = m.tag_logprob(&hid, slot).exp();
            let want = tag_oracle.prob(&[h], sym);
            assert!((got - want).abs() < 1e-10, "P({sym} | {h}) = {got}, expected {want}");
        }
        for (t, events) in word_events.iter().enumerate() {
            let oracle = KnOracle::from_events(events, 2, word_vocab.clone(), fallback);
            for w in &word_vocab {
                let got = m.word_logprob(&hid, t, v.lookup(w)).exp();
                let want = oracle.prob(&[h], w);
                assert!((got - want).abs() < 1e-10, "P({w} | {h}, tag {t}) = {got}, expected {want}");
            }
        }
    }
}

#[test]
fn joint_chain_is_bounded_by_each_factor() {
    let c = corpus(&random_tagged(12, 50, 6, 2), 2);
    let m = train_joint(&c, 3).unwrap();
    for s in &c.sentences {
        let mut history = vec![BOS_ID];
        let (mut tag_lp, mut word_lp) = (0.0, 0.0);
        for &(w, t) in s {
            let ctx = &history[history.len().saturating_sub(2)..];
            tag_lp += m.tag_logprob(ctx, t);
            word_lp += m.word_logprob(ctx, t, w);
            history.push(m.pair_id(w, t));
        }
        assert!(tag_lp + word_lp <= tag_lp.min(word_lp));
    }
}

#[test]
fn wider_beams_are_never_less_accurate() {
    for (seed, tags, n) in [(21, 3, 3), (22, 3, 2), (23, 2, 3)] {
        let c = corpus(&random_tagged(seed, 120, 10, tags), tags);
        let mut model = train_joint(&c, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for _ in 0..10 {
            let words: Vec<TokenId> =
                (0..5).map(|_| model.vocab().lookup(&format!("v{}", rng.gen_range(0..10)))).collect();
            let mut full = words.clone();
            full.push(EOS_ID);
            let exact = marginal(&model, &full);
            let mut last_err = f64::INFINITY;
            for beam in [0.9, 0.5, 0.1, 1e-2, 1e-3, 1e-4, 0.0] {
                model = model.with_beam(beam);
                let err = (model.score(&words).logprob.exp() - exact).abs();
                assert!(err <= last_err + 1e-15, "beam {beam}: error {err} after {last_err}");
                last_err = err;
            }
            assert!(last_err < 1e-12);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let c = corpus(&random_tagged(33, 80, 8, 3), 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_joint(&c, 3).unwrap().save(a.path()).unwrap();
    train_joint(&c, 3).unwrap().save(b.path()).unwrap();
    for name in ["tags.txt", "tag.arpa", "word.0.arpa", "word.1.arpa", "word.2.arpa"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn static_mixture_is_normalized() {
    let lines = plain_lines(6, 200);
    let tagged: String = lines
        .iter()
        .map(|l| l.split_whitespace().map(|w| format!("{w}|||{}", w.len() % 2)).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    let tm = train_joint(&corpus(&tagged, 2), 2).unwrap().with_beam(0.0);
    let wm = word_model(&lines, 3);
    let vocab: Vec<String> = wm.predictable().iter().map(|&id| wm.vocab().resolve(id).to_string()).collect();
    let mix = StaticMixture::new(vec![Arc::new(tm), Arc::new(wm)], vec![0.4, 0.6]).unwrap();
    for prefix in [vec![], vec!["w1"], vec!["w3", "w0"]] {
        let mut total = 0.0;
        for w in &vocab {
            let lp = if w == "</s>" {
                *mix.token_logprobs(&prefix).unwrap().last().unwrap()
            } else {
                let mut s = prefix.clone();
                s.push(w);
                mix.token_logprobs(&s).unwrap()[prefix.len()]
            };
            total += lp.exp();
        }
        assert!((total - 1.0).abs() < 1e-6, "prefix {prefix:?} sums to {total}");
    }
}

/// Draws a sentence from a backoff model's conditional distributions.
fn sample(m: &BackoffModel, rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    let words = m.predictable();
    let mut history = vec![BOS_ID];
    let mut out = Vec::new();
    while out.len() < max_len {
        let mut u: f64 = rng.gen();
        let mut pick = EOS_ID;
        for &w in &words {
            u -= m.logprob(&history, w).exp();
            if u < 0.0 {
                pick = w;
                break;
            }
        }
        if pick == EOS_ID {
            break;
        }
        if pick != UNK_ID {
            out.push(m.vocab().resolve(pick).to_string());
        }
        history.push(pick);
    }
    out
}

#[test]
fn dynamic_weights_find_the_generating_component() {
    let a: Vec<String> = plain_lines(41, 300);
    let b: Vec<String> = plain_lines(42, 300)
        .iter()
        .map(|l| l.split_whitespace().rev().collect::<Vec<_>>().join(" "))
        .collect();
    let ma = word_model(&a, 2);
    let mb = word_model(&b, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut one_best: Vec<String> = Vec::new();
    while one_best.len() < 80 {
        one_best.extend(sample(&mb, &mut rng, 10));
    }
    let words: Vec<&str> = one_best.iter().map(String::as_str).collect();
    let la = ma.token_logprobs(&words).unwrap();
    let lb = mb.token_logprobs(&words).unwrap();
    let ll = |l: f64| la.iter().zip(&lb).map(|(x, y)| ((1.0 - l) * x.exp() + l * y.exp()).ln()).sum::<f64>();
    let grid = (0..=100).map(|i| i as f64 / 100.0).max_by(|x, y| ll(*x).total_cmp(&ll(*y))).unwrap();

    let base = StaticMixture::new(vec![Arc::new(ma), Arc::new(mb)], vec![0.5, 0.5]).unwrap();
    let adapt: BTreeMap<String, Vec<String>> = [("seg1".to_string(), one_best.clone())].into();
    let dm = DynamicMixture::fit(base, &adapt, &MixtureEmConfig::default()).unwrap();
    let w = dm.segment_weights("seg1").unwrap();
    assert!(w[1] >= 0.9, "weight on generating component {}", w[1]);
    assert!((w[1] - grid).abs() <= 0.01, "EM {} vs grid {grid}", w[1]);
}

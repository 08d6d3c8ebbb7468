//! Running the binary and a small coherent data set for it.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GOLD: &str = include_str!("../../../core/tests/fixtures/chunk_gold.tsv");

pub fn lmrescore<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmrescore"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs and panics with stderr unless the exit status is 0.
pub fn ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    let out = lmrescore(args);
    assert!(
        out.status.success(),
        "{:?} failed: {}",
        args.iter().map(|a| a.as_ref().to_string_lossy().into_owned()).collect::<Vec<_>>(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> i32 {
    lmrescore(args).status.code().expect("exited normally")
}

/// `key TAB value` report lines into a lookup.
pub fn report(path: &Path) -> std::collections::HashMap<String, f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

const DET: [&str; 2] = ["the", "a"];
const ADJ: [&str; 2] = ["old", "big"];
const NOUN: [&str; 5] = ["dog", "cat", "man", "mat", "park"];
const VERB: [&str; 4] = ["barks", "sleeps", "runs", "sees"];
const PREP: [&str; 2] = ["in", "on"];

/// Inventory lines; word generators below refer to these ids.
const TAGS: [&str; 6] = [
    "DT||G:det:R:NN|-",
    "JJ||G:amod:R:NN|-",
    "NN|num=sg|G:subj:R:VBZ|-",
    "VBZ|agr=3sg|G:root:-:-;N1:subj:L:NN|N1<G",
    "IN||G:prep:L:VBZ;N1:pobj:R:NN|G<N1",
    ".||G:punct:L:VBZ|-",
];

fn sentence(rng: &mut ChaCha8Rng) -> Vec<(&'static str, usize)> {
    let mut s = vec![(*DET.choose(rng).unwrap(), 0)];
    if rng.gen_bool(0.3) {
        s.push((ADJ.choose(rng).unwrap(), 1));
    }
    s.push((NOUN.choose(rng).unwrap(), 2));
    s.push((VERB.choose(rng).unwrap(), 3));
    if rng.gen_bool(0.5) {
        s.push((PREP.choose(rng).unwrap(), 4));
        s.push((DET.choose(rng).unwrap(), 0));
        s.push((NOUN.choose(rng).unwrap(), 2));
    }
    if rng.gen_bool(0.5) {
        s.push((".", 5));
    }
    s
}

fn words(s: &[(&str, usize)]) -> String {
    s.iter().map(|p| p.0).collect::<Vec<_>>().join(" ")
}

pub struct Data {
    pub train: PathBuf,
    pub heldout: PathBuf,
    pub tagged: PathBuf,
    pub tags: PathBuf,
    pub gold: PathBuf,
    pub nbest: PathBuf,
    pub references: PathBuf,
    pub coc: PathBuf,
}

/// Writes the data set into `dir`; identical for identical seeds.
pub fn write_data(dir: &Path, seed: u64) -> Data {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = |name: &str| dir.join(name);
    let mut train = String::new();
    let mut tagged = String::new();
    for i in 0..400 {
        let s = sentence(&mut rng);
        let line = words(&s);
        // a few numbers and capitals exercise normalization
        if i % 37 == 0 {
            writeln!(train, "The {} 42", line).unwrap();
        } else {
            writeln!(train, "{line}").unwrap();
        }
        let toks: Vec<String> = s.iter().map(|(w, t)| format!("{w}|||{t}")).collect();
        writeln!(tagged, "{}", toks.join(" ")).unwrap();
    }
    let heldout: String = (0..60).map(|_| words(&sentence(&mut rng)) + "\n").collect();
    let tags: String = TAGS.iter().enumerate().map(|(i, c)| format!("{i}|{c}\n")).collect();

    let mut nbest = String::new();
    let mut references = String::new();
    for seg in 0..12 {
        let hyps: Vec<String> = (0..8).map(|_| words(&sentence(&mut rng))).collect();
        let mut scores: Vec<f64> = hyps.iter().map(|_| rng.gen_range(-12.0..-4.0)).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        for (h, d) in hyps.iter().zip(&scores) {
            let tm: f64 = rng.gen_range(-3.0..0.0);
            writeln!(nbest, "s{seg} ||| {h} ||| tm={tm} len={} ||| {d}", h.split(' ').count()).unwrap();
        }
        writeln!(references, "{}", hyps[rng.gen_range(0..hyps.len())]).unwrap();
    }

    // counts-of-counts following the law with alpha 1.5, F(1) absent
    let mut coc = String::new();
    let mut f = 1e6f64;
    for c in 2..=12u64 {
        writeln!(coc, "1\t{c}\t{f}\tobserved").unwrap();
        f *= (-1.5 / c as f64).exp();
    }

    let data = Data {
        train: path("train.txt"),
        heldout: path("heldout.txt"),
        tagged: path("tagged.txt"),
        tags: path("tags.txt"),
        gold: path("gold.tsv"),
        nbest: path("nbest.txt"),
        references: path("refs.txt"),
        coc: path("coc.txt"),
    };
    fs::write(&data.train, train).unwrap();
    fs::write(&data.heldout, heldout).unwrap();
    fs::write(&data.tagged, tagged).unwrap();
    fs::write(&data.tags, tags).unwrap();
    fs::write(&data.gold, GOLD).unwrap();
    fs::write(&data.nbest, nbest).unwrap();
    fs::write(&data.references, references).unwrap();
    fs::write(&data.coc, coc).unwrap();
    data
}

/// Every subcommand over `data`, writing into `out`, as argument lists.
pub fn pipeline(data: &Data, out: &Path, threads: usize) -> Vec<Vec<String>> {
    let o = |name: &str| p(&out.join(name));
    let s = |v: &[&str]| -> Vec<String> {
        let mut a: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        a.extend(["--threads".into(), threads.to_string(), "--seed".into(), "5".into()]);
        a
    };
    let counts = o("counts");
    let mert_restarts = "3";
    vec![
        s(&["count", "--text", &p(&data.train), "--order", "3", "--shard-lines", "50", "--output", &counts]),
        s(&["count", "--text", &p(&data.heldout), "--order", "3", "--gzip", "--output", &o("held_counts")]),
        s(&["merge-counts", "--input", &counts, "--input", &o("held_counts"), "--output", &o("merged")]),
        s(&["coc-extrapolate", "--coc", &p(&data.coc), "--output", &o("coc_filled.txt")]),
        s(&["plot-coc", "--coc", &p(&data.coc), "--output", &o("plot.tsv")]),
        s(&["train-kn", "--counts", &counts, "--fallback-discounts", "--output", &o("kn.arpa")]),
        s(&["train-countlm", "--counts", &counts, "--heldout", &p(&data.heldout), "--output", &o("jm.tsv"), "--trace", &o("em.tsv")]),
        s(&["train-taglm", "--tagged", &p(&data.tagged), "--tags", &p(&data.tags), "--order", "3", "--output", &o("taglm")]),
        s(&["train-chunker", "--gold", &p(&data.gold), "--output", &o("basenp.tsv")]),
        s(&["train-linkmodel", "--gold", &p(&data.gold), "--output", &o("links.tsv")]),
        s(&[
            "score",
            "--nbest",
            &p(&data.nbest),
            "--lm",
            &format!("kn=arpa:{}", o("kn.arpa")),
            "--lm",
            &format!("jm=countlm:{counts},{}", o("jm.tsv")),
            "--lm",
            &format!("tag=taglm:{}", o("taglm")),
            "--lm",
            &format!("parse=parser:{},{},{}", o("taglm"), o("basenp.tsv"), o("links.tsv")),
            "--mixture",
            "mix=dynamic:0.5,0.5:kn,tag",
            "--output",
            &o("scored.txt"),
            "--failures",
            &o("failures.tsv"),
        ]),
        s(&["ppl", "--model", &format!("arpa:{}", o("kn.arpa")), "--model", &format!("taglm:{}", o("taglm")), "--text", &p(&data.heldout), "--output", &o("ppl.tsv")]),
        s(&["mert", "--nbest", &o("scored.txt"), "--references", &p(&data.references), "--restarts", mert_restarts, "--output", &o("weights.tsv"), "--log", &o("mert.log")]),
        s(&["rerank", "--nbest", &o("scored.txt"), "--weights", &o("weights.tsv"), "--output", &o("best.txt"), "--ranking", &o("ranking.tsv")]),
        s(&["bleu", "--candidates", &o("best.txt"), "--references", &p(&data.references), "--output", &o("bleu.tsv")]),
    ]
}

/// Every file below `dir` with its bytes, by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else {
                out.push((e.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&e).unwrap()));
            }
        }
    }
    out.sort();
    out
}

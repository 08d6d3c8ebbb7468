mod common;

use std::fs;

use common::{code, lmrescore, ok, p, pipeline, report, snapshot, write_data};
use lmrescore::rerank::write_nbest;

#[path = "../../core/tests/common/synthetic.rs"]
mod synthetic;

#[test]
fn ppl_reproduces_the_hand_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("train.txt"), "a b\na b\na c\n").unwrap();
    fs::write(d.join("test.txt"), "a c\nb\n").unwrap();
    ok(&["count", "--text", &p(&d.join("train.txt")), "--order", "2", "--output", &p(&d.join("counts"))]);
    ok(&["train-kn", "--counts", &p(&d.join("counts")), "--output", &p(&d.join("m.arpa"))]);
    ok(&["ppl", "--model", &format!("arpa:{}", p(&d.join("m.arpa"))), "--text", &p(&d.join("test.txt")), "--output", &p(&d.join("ppl.tsv"))]);
    let r = report(&d.join("ppl.tsv"));
    let p_a = 0.232f64;
    let p_c_a = 2.0 / 9.0 + 11.0 / 18.0 * 0.232;
    let p_end_c = 2.0 / 3.0 + 1.0 / 3.0 * 0.152;
    let p_end_b = 0.25 + 0.75 * 0.152;
    let ll: f64 = [p_a, p_c_a, p_end_c, p_a, p_end_b].iter().map(|x| x.ln()).sum();
    let want = (-ll / 5.0).exp();
    // the ARPA file carries six decimals
    assert!((r["perplexity"] - want).abs() / want < 1e-5, "{} vs {want}", r["perplexity"]);
    assert_eq!(r["predicted"], 5.0);
    assert_eq!(r["oovs"], 0.0);
}

#[test]
fn plot_coc_linearizes_law_generated_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 1);
    let out = dir.path().join("plot.tsv");
    ok(&["plot-coc", "--coc", &p(&data.coc), "--range", "2:11", "--output", &p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut points = 0;
    for line in text.lines() {
        let (k, v) = line.split_once('\t').unwrap();
        let v: f64 = v.parse().unwrap();
        match k {
            "# alpha" => assert!((v - 1.5).abs() < 1e-9),
            "# order" => assert_eq!(v, 1.0),
            k if k.starts_with('#') => {}
            c => {
                let c: f64 = c.parse().unwrap();
                assert!((v - c / 1.5).abs() < 1e-6, "y({c}) = {v}");
                points += 1;
            }
        }
    }
    assert_eq!(points, 10);
}

#[test]
fn extrapolation_fills_the_singleton_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("coc.txt"), "2\t2\t100\tobserved\n2\t3\t50\tobserved\n").unwrap();
    let out = d.join("filled.txt");
    ok(&["coc-extrapolate", "--coc", &p(&d.join("coc.txt")), "--alpha", &std::f64::consts::LN_2.to_string(), "--output", &p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == "2\t1\t200\textrapolated"), "{text}");
}

#[test]
fn mert_then_rerank_recovers_the_references() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let task = synthetic::synthetic_task(3, 20, 50, 4);
    let mut nbest = Vec::new();
    write_nbest(&mut nbest, &task.lists).unwrap();
    fs::write(d.join("nbest.txt"), nbest).unwrap();
    let refs: String = task.references.iter().map(|r| r.join(" ") + "\n").collect();
    fs::write(d.join("refs.txt"), &refs).unwrap();
    ok(&[
        "mert", "--nbest", &p(&d.join("nbest.txt")), "--references", &p(&d.join("refs.txt")), "--seed", "11", "--output",
        &p(&d.join("w.tsv")), "--log", &p(&d.join("mert.log")),
    ]);
    ok(&["rerank", "--nbest", &p(&d.join("nbest.txt")), "--weights", &p(&d.join("w.tsv")), "--output", &p(&d.join("best.txt"))]);
    let chosen: String = fs::read_to_string(d.join("best.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_once(" ||| ").unwrap().1.to_string() + "\n")
        .collect();
    assert_eq!(chosen, refs);
    ok(&["bleu", "--candidates", &p(&d.join("best.txt")), "--references", &p(&d.join("refs.txt")), "--output", &p(&d.join("bleu.tsv"))]);
    assert_eq!(report(&d.join("bleu.tsv"))["bleu"], 1.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("w.tsv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["results"]["bleu"], 1.0);
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 2);
    let out = dir.path().join("out");
    for args in pipeline(&data, &out, 2) {
        ok(&args);
    }
    let scored = fs::read_to_string(out.join("scored.txt")).unwrap();
    for feature in ["kn=", "jm=", "tag=", "parse=", "mix="] {
        assert_eq!(scored.matches(feature).count(), 12 * 8, "{feature}");
    }
    assert_eq!(fs::read_to_string(out.join("failures.tsv")).unwrap(), "");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("scored.txt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "score");
    assert!(manifest["inputs"].as_array().unwrap().len() >= 5);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let counts = fs::read_to_string(out.join("counts/source.txt")).unwrap();
    assert_eq!(counts.trim(), "corpus");
    let unigrams = fs::read_to_string(out.join("counts/1gms.txt")).unwrap();
    assert!(unigrams.contains("$number\t"));
    assert!(!unigrams.contains("The\t"));
}

#[test]
fn merged_counts_add_up() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("x.txt"), "a b\nb c\n").unwrap();
    fs::write(d.join("y.txt"), "a b c\n").unwrap();
    fs::write(d.join("xy.txt"), "a b\nb c\na b c\n").unwrap();
    for name in ["x", "y", "xy"] {
        ok(&["count", "--text", &p(&d.join(format!("{name}.txt"))), "--order", "3", "--output", &p(&d.join(name))]);
    }
    ok(&["merge-counts", "--input", &p(&d.join("x")), "--input", &p(&d.join("y")), "--output", &p(&d.join("m"))]);
    for k in 1..=3 {
        let name = format!("{k}gms.txt");
        assert_eq!(fs::read(d.join("m").join(&name)).unwrap(), fs::read(d.join("xy").join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn exit_codes_classify_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // usage: unknown flag, missing input, bad model spec
    assert_eq!(code(&["count", "--bogus"]), 2);
    assert_eq!(code(&["train-kn", "--counts", &p(&d.join("none")), "--output", &p(&d.join("m.arpa"))]), 2);
    fs::write(d.join("t.txt"), "a\n").unwrap();
    assert_eq!(code(&["ppl", "--model", "neural:x", "--text", &p(&d.join("t.txt")), "--output", &p(&d.join("o"))]), 2);
    // format: malformed N-best and weights
    fs::write(d.join("bad.nbest"), "s1 ||| a b\n").unwrap();
    fs::write(d.join("w.tsv"), "decoder\t1\n").unwrap();
    assert_eq!(code(&["rerank", "--nbest", &p(&d.join("bad.nbest")), "--weights", &p(&d.join("w.tsv")), "--output", &p(&d.join("o"))]), 3);
    fs::write(d.join("good.nbest"), "s1 ||| a b ||| tm=1 ||| -1\n").unwrap();
    assert_eq!(code(&["rerank", "--nbest", &p(&d.join("good.nbest")), "--weights", &p(&d.join("w.tsv")), "--output", &p(&d.join("o"))]), 3);
    fs::write(d.join("refs.txt"), "a b\nc\n").unwrap();
    assert_eq!(code(&["mert", "--nbest", &p(&d.join("good.nbest")), "--references", &p(&d.join("refs.txt")), "--output", &p(&d.join("o"))]), 3);
    // numerical: tiny counts leave the discounts undefined without a fallback
    ok(&["count", "--text", &p(&d.join("t.txt")), "--order", "2", "--output", &p(&d.join("c"))]);
    assert_eq!(code(&["train-kn", "--counts", &p(&d.join("c")), "--output", &p(&d.join("m.arpa"))]), 4);
    // numerical: a flat counts-of-counts run has no finite law point
    fs::write(d.join("flat.txt"), "1\t2\t10\tobserved\n1\t3\t10\tobserved\n1\t4\t10\tobserved\n").unwrap();
    assert_eq!(code(&["plot-coc", "--coc", &p(&d.join("flat.txt")), "--range", "2:4", "--output", &p(&d.join("o"))]), 4);
    // io: output below a regular file
    assert_eq!(code(&["count", "--text", &p(&d.join("t.txt")), "--output", &p(&d.join("t.txt").join("sub"))]), 1);
    assert!(!d.join("o").exists());
}

#[test]
fn failed_runs_leave_existing_outputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("t.txt"), "a b\na b\na c\n").unwrap();
    ok(&["count", "--text", &p(&d.join("t.txt")), "--order", "2", "--output", &p(&d.join("c"))]);
    ok(&["train-kn", "--counts", &p(&d.join("c")), "--output", &p(&d.join("m.arpa"))]);
    let before = fs::read(d.join("m.arpa")).unwrap();
    fs::write(d.join("c/2gms.txt"), "garbage\nmore garbage\n").unwrap();
    assert_eq!(code(&["train-kn", "--counts", &p(&d.join("c")), "--output", &p(&d.join("m.arpa"))]), 3);
    assert_eq!(fs::read(d.join("m.arpa")).unwrap(), before);
    let leftovers: Vec<_> = fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with('.'))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn rewriting_a_count_directory_replaces_it_whole() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("t.txt"), "a b c\n").unwrap();
    ok(&["count", "--text", &p(&d.join("t.txt")), "--order", "3", "--output", &p(&d.join("c"))]);
    ok(&["count", "--text", &p(&d.join("t.txt")), "--order", "2", "--gzip", "--output", &p(&d.join("c"))]);
    let names: Vec<_> = snapshot(&d.join("c")).into_iter().map(|(n, _)| p(&n)).collect();
    assert_eq!(names, ["1gms.txt.gz", "2gms.txt.gz", "source.txt"]);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("t.txt"), "a b c\n").unwrap();
    fs::write(d.join("cfg.toml"), "[common]\nseed = 7\n[count]\norder = 2\ngzip = true\n").unwrap();
    ok(&["count", "--config", &p(&d.join("cfg.toml")), "--text", &p(&d.join("t.txt")), "--output", &p(&d.join("c"))]);
    assert!(d.join("c/2gms.txt.gz").exists());
    assert!(!d.join("c/3gms.txt.gz").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("c.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    ok(&["count", "--config", &p(&d.join("cfg.toml")), "--order", "3", "--text", &p(&d.join("t.txt")), "--output", &p(&d.join("c"))]);
    assert!(d.join("c/3gms.txt.gz").exists());
}

#[test]
fn help_documents_formats() {
    let out = lmrescore(&["score", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("segment ||| tokens ||| name=value"));
    let out = lmrescore(&["--help"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("Exit status"));
}

//! ARPA backoff format. Values are log10 on disk, natural log in memory.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use crate::corpus::{TokenId, Vocabulary};

use super::model::{BackoffModel, ModelMetadata, NgramEntry};

#[derive(Debug, thiserror::Error)]
pub enum ArpaError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("header declares {declared} {order}-grams, file has {found}")]
    CountMismatch {
        order: usize,
        declared: usize,
        found: usize,
    },
}

fn fmt_log10(ln: f64) -> String {
    format!("{:.6}", ln / std::f64::consts::LN_10)
}

pub fn write_arpa<W: Write>(model: &BackoffModel, mut out: W) -> io::Result<()> {
    let vocab = model.vocab();
    writeln!(out, "\\data\\")?;
    for k in 1..=model.max_order() {
        writeln!(out, "ngram {k}={}", model.order_len(k))?;
    }
    for k in 1..=model.max_order() {
        writeln!(out)?;
        writeln!(out, "\\{k}-grams:")?;
        let mut rows: Vec<(String, &NgramEntry)> = model
            .order_entries(k)
            .map(|(gram, e)| {
                let toks: Vec<&str> = gram.iter().map(|&id| vocab.resolve(id)).collect();
                (toks.join(" "), e)
            })
            .collect();
        rows.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
        for (toks, e) in rows {
            match e.backoff {
                Some(b) => writeln!(out, "{}\t{toks}\t{}", fmt_log10(e.logprob), fmt_log10(b))?,
                None => writeln!(out, "{}\t{toks}", fmt_log10(e.logprob))?,
            }
        }
    }
    writeln!(out)?;
    writeln!(out, "\\end\\")?;
    out.flush()
}

pub fn read_arpa<R: BufRead>(input: R) -> Result<BackoffModel, ArpaError> {
    enum Section {
        Start,
        Data,
        Grams(usize),
        End,
    }
    let mut section = Section::Start;
    let mut declared: Vec<usize> = Vec::new();
    let mut rows: Vec<(Vec<String>, f64, Option<f64>)> = Vec::new();
    let mut found: Vec<usize> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let err = |msg: &str| ArpaError::Parse {
            line: lineno,
            msg: msg.to_string(),
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "\\data\\" {
            section = Section::Data;
            continue;
        }
        if trimmed == "\\end\\" {
            section = Section::End;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('\\') {
            let k: usize = rest
                .strip_suffix("-grams:")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("bad section header"))?;
            if k == 0 || k > declared.len() {
                return Err(err("section order not declared in header"));
            }
            section = Section::Grams(k);
            continue;
        }
        match section {
            Section::Start => return Err(err("content before \\data\\")),
            Section::End => return Err(err("content after \\end\\")),
            Section::Data => {
                let spec = trimmed
                    .strip_prefix("ngram ")
                    .ok_or_else(|| err("expected 'ngram k=count'"))?;
                let (k, c) = spec.split_once('=').ok_or_else(|| err("expected '='"))?;
                let k: usize = k.trim().parse().map_err(|_| err("bad order"))?;
                let c: usize = c.trim().parse().map_err(|_| err("bad count"))?;
                if k != declared.len() + 1 {
                    return Err(err("orders must be declared in sequence"));
                }
                declared.push(c);
                found.push(0);
            }
            Section::Grams(k) => {
                let (prob, toks, bow) = split_row(&line, k).ok_or_else(|| err("malformed n-gram row"))?;
                let prob: f64 = prob.parse().map_err(|_| err("bad probability"))?;
                let bow = match bow {
                    Some(b) => Some(b.parse::<f64>().map_err(|_| err("bad backoff"))?),
                    None => None,
                };
                found[k - 1] += 1;
                rows.push((toks, prob, bow));
            }
        }
    }
    for (i, (&d, &f)) in declared.iter().zip(&found).enumerate() {
        if d != f {
            return Err(ArpaError::CountMismatch {
                order: i + 1,
                declared: d,
                found: f,
            });
        }
    }
    if declared.is_empty() {
        return Err(ArpaError::Parse {
            line: 0,
            msg: "missing \\data\\ header".into(),
        });
    }
    let mut vocab = Vocabulary::new();
    let grams: Vec<Vec<TokenId>> = rows
        .iter()
        .map(|(toks, _, _)| toks.iter().map(|t| vocab.intern(t)).collect())
        .collect();
    let mut model = BackoffModel::new(Arc::new(vocab), declared.len(), ModelMetadata::loaded());
    let ln10 = std::f64::consts::LN_10;
    for (gram, (_, prob, bow)) in grams.iter().zip(rows) {
        model.insert(
            gram,
            NgramEntry {
                logprob: prob * ln10,
                backoff: bow.map(|b| b * ln10),
            },
        );
    }
    Ok(model)
}

/// Splits `logprob TAB tokens [TAB backoff]`, falling back to whitespace
/// separation for files that do not use tabs.
fn split_row(line: &str, k: usize) -> Option<(&str, Vec<String>, Option<&str>)> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() >= 2 {
        let toks: Vec<String> = fields[1].split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
        if toks.len() != k || fields.len() > 3 {
            return None;
        }
        return Some((fields[0].trim(), toks, fields.get(2).map(|s| s.trim())));
    }
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.len() {
        n if n == k + 1 => Some((parts[0], parts[1..].iter().map(|s| s.to_string()).collect(), None)),
        n if n == k + 2 => Some((
            parts[0],
            parts[1..=k].iter().map(|s| s.to_string()).collect(),
            Some(parts[k + 1]),
        )),
        _ => None,
    }
}

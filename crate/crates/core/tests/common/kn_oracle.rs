//! Direct, string-keyed interpolated modified Kneser-Ney, computed on demand
//! from raw events. Shares no code with the library's trainer.

use std::collections::{BTreeSet, HashMap};

type Gram = Vec<String>;

pub struct KnOracle {
    n: usize,
    adjusted: Vec<HashMap<Gram, u64>>,
    discounts: Vec<[f64; 3]>,
    pub vocab: Vec<String>,
}

#[allow(dead_code)]
impl KnOracle {
    /// Sentences of space-separated words; open vocabulary.
    pub fn new(sentences: &[&str], n: usize) -> Self {
        let mut events = Vec::new();
        for s in sentences {
            let mut toks = vec!["<s>".to_string()];
            toks.extend(s.split_whitespace().map(String::from));
            toks.push("</s>".to_string());
            for i in 1..toks.len() {
                events.push((toks[..i].to_vec(), toks[i].clone()));
            }
        }
        let mut vocab: BTreeSet<String> = events.iter().map(|e| e.1.clone()).collect();
        vocab.insert("<unk>".into());
        Self::from_events(&events, n, vocab.into_iter().collect(), None)
    }

    /// `(full history, predicted)` events; the history is truncated to n-1.
    /// `fallback` replaces discounts that are undefined or negative.
    pub fn from_events(events: &[(Vec<String>, String)], n: usize, vocab: Vec<String>, fallback: Option<[f64; 3]>) -> Self {
        let mut raw: Vec<HashMap<Gram, u64>> = vec![HashMap::new(); n];
        for (hist, w) in events {
            let h = &hist[hist.len().saturating_sub(n - 1)..];
            for k in 1..=h.len() + 1 {
                let mut g = h[h.len() + 1 - k..].to_vec();
                g.push(w.clone());
                *raw[k - 1].entry(g).or_default() += 1;
            }
        }
        let mut adjusted = raw.clone();
        for k in 1..n {
            for (g, a) in adjusted[k - 1].iter_mut() {
                if g[0] != "<s>" {
                    *a = raw[k].keys().filter(|h| h[1..] == g[..]).count() as u64;
                }
            }
        }
        let discounts = adjusted
            .iter()
            .map(|m| {
                let f = |c: u64| m.values().filter(|&&v| v == c).count() as f64;
                if f(1) == 0.0 || f(2) == 0.0 {
                    return fallback.expect("discounts undefined");
                }
                let y = f(1) / (f(1) + 2.0 * f(2));
                let r43 = if f(3) > 0.0 { f(4) / f(3) } else { 0.0 };
                let d = [1.0 - 2.0 * y * f(2) / f(1), 2.0 - 3.0 * y * f(3) / f(2), 3.0 - 4.0 * y * r43];
                if d.iter().any(|&x| x < 0.0) {
                    return fallback.expect("negative discount");
                }
                d
            })
            .collect();
        KnOracle { n, adjusted, discounts, vocab }
    }

    fn discount(&self, k: usize, a: u64) -> f64 {
        match a {
            0 => 0.0,
            1 => self.discounts[k - 1][0],
            2 => self.discounts[k - 1][1],
            _ => self.discounts[k - 1][2],
        }
    }

    /// P(w | context), using at most the last n-1 context words.
    pub fn prob(&self, context: &[&str], w: &str) -> f64 {
        let w = if self.vocab.iter().any(|v| v == w) { w } else { "<unk>" };
        let ctx = &context[context.len().saturating_sub(self.n - 1)..];
        let k = ctx.len() + 1;
        let table = &self.adjusted[k - 1];
        let rows: Vec<(&Gram, u64)> = table
            .iter()
            .filter(|(g, _)| g[..k - 1].iter().map(String::as_str).eq(ctx.iter().copied()))
            .map(|(g, &a)| (g, a))
            .collect();
        let total: u64 = rows.iter().map(|r| r.1).sum();
        if total == 0 {
            return self.prob(&ctx[1..], w);
        }
        let s = total as f64;
        let removed: f64 = rows.iter().map(|&(_, a)| self.discount(k, a).min(a as f64)).sum();
        let a = rows.iter().find(|(g, _)| g[k - 1] == w).map_or(0, |r| r.1);
        let own = (a as f64 - self.discount(k, a).min(a as f64)) / s;
        let lower = if ctx.is_empty() { 1.0 / self.vocab.len() as f64 } else { self.prob(&ctx[1..], w) };
        own + removed / s * lower
    }
}

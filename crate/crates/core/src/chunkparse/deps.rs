//! Dependency links over reduced sentences: the link model, head search,
//! and rule-based punctuation attachment.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use crate::corpus::normalize::is_punctuation;

use super::basenp::final_punctuation;
use super::ChunkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// The head precedes the dependent.
    HeadLeft,
    HeadRight,
}

impl Direction {
    pub fn of(dependent: usize, head: usize) -> Self {
        if head < dependent {
            Direction::HeadLeft
        } else {
            Direction::HeadRight
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::HeadLeft => "L",
            Direction::HeadRight => "R",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "L" => Some(Direction::HeadLeft),
            "R" => Some(Direction::HeadRight),
            _ => None,
        }
    }
}

/// Distance buckets {1, 2, 3-4, 5+} as 0..=3.
pub fn distance_bucket(dependent: usize, head: usize) -> u8 {
    match dependent.abs_diff(head) {
        0 | 1 => 0,
        2 => 1,
        3 | 4 => 2,
        _ => 3,
    }
}

/// (links, candidate pairs)
type Rate = (u64, u64);

/// First-order link model: the rate at which a dependent of one category
/// takes a head of another category at a given direction and distance,
/// among all such word pairs seen in training. Backs off to
/// (dependent category, direction), then to the overall link rate, each
/// level keeping weight n / (n + 2) for n candidate pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkModel {
    full: BTreeMap<(String, String, Direction, u8), Rate>,
    back: BTreeMap<(String, Direction), Rate>,
    total: Rate,
    labels: BTreeMap<(String, String, Direction), BTreeMap<String, u64>>,
}

/// One sentence's training view: categories of the non-punctuation tokens of
/// a reduced sentence, their positions, and gold heads (an index into the
/// same list; `None` for the root) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEvents {
    pub categories: Vec<String>,
    pub positions: Vec<usize>,
    pub heads: Vec<Option<usize>>,
    pub labels: Vec<String>,
}

impl LinkModel {
    pub fn train<'a, I: IntoIterator<Item = &'a LinkEvents>>(sentences: I) -> Self {
        let mut m = LinkModel::default();
        for s in sentences {
            for d in 0..s.categories.len() {
                for h in 0..s.categories.len() {
                    if h == d {
                        continue;
                    }
                    let (pd, ph) = (s.positions[d], s.positions[h]);
                    let dir = Direction::of(pd, ph);
                    let linked = u64::from(s.heads[d] == Some(h));
                    let cd = s.categories[d].clone();
                    let full = m
                        .full
                        .entry((cd.clone(), s.categories[h].clone(), dir, distance_bucket(pd, ph)))
                        .or_default();
                    full.0 += linked;
                    full.1 += 1;
                    let back = m.back.entry((cd.clone(), dir)).or_default();
                    back.0 += linked;
                    back.1 += 1;
                    m.total.0 += linked;
                    m.total.1 += 1;
                    if linked == 1 {
                        *m.labels
                            .entry((cd, s.categories[h].clone(), dir))
                            .or_default()
                            .entry(s.labels[d].clone())
                            .or_default() += 1;
                    }
                }
            }
        }
        m
    }

    pub fn prob(&self, dependent: &str, head: &str, dir: Direction, bucket: u8) -> f64 {
        let mut p = if self.total.0 > 0 {
            self.total.0 as f64 / self.total.1 as f64
        } else {
            0.5
        };
        let shrink = |p: f64, r: Option<&Rate>| match r {
            Some(&(l, n)) => {
                let w = n as f64 / (n as f64 + 2.0);
                w * l as f64 / n as f64 + (1.0 - w) * p
            }
            None => p,
        };
        p = shrink(p, self.back.get(&(dependent.to_string(), dir)));
        shrink(p, self.full.get(&(dependent.to_string(), head.to_string(), dir, bucket)))
    }

    /// Most frequent training label for this attachment, else `dep`.
    pub fn label(&self, dependent: &str, head: &str, dir: Direction) -> String {
        self.labels
            .get(&(dependent.to_string(), head.to_string(), dir))
            .and_then(|m| m.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))))
            .map_or_else(|| "dep".to_string(), |(l, _)| l.clone())
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "total\t{}\t{}", self.total.0, self.total.1)?;
        for ((d, dir), (l, n)) in &self.back {
            writeln!(out, "back\t{d}\t{}\t{l}\t{n}", dir.as_str())?;
        }
        for ((d, h, dir, b), (l, n)) in &self.full {
            writeln!(out, "full\t{d}\t{h}\t{}\t{b}\t{l}\t{n}", dir.as_str())?;
        }
        for ((d, h, dir), m) in &self.labels {
            for (label, c) in m {
                writeln!(out, "label\t{d}\t{h}\t{}\t{label}\t{c}", dir.as_str())?;
            }
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, ChunkError> {
        let mut m = LinkModel::default();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let err = || ChunkError::Format {
                line: idx + 1,
                msg: format!("bad link-model record {line:?}"),
            };
            let f: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<u64>().map_err(|_| err());
            let dir = |s: &str| Direction::parse(s).ok_or_else(err);
            match (f[0], f.len()) {
                ("total", 3) => m.total = (num(f[1])?, num(f[2])?),
                ("back", 5) => {
                    m.back.insert((f[1].to_string(), dir(f[2])?), (num(f[3])?, num(f[4])?));
                }
                ("full", 7) => {
                    let b = u8::try_from(num(f[4])?).map_err(|_| err())?;
                    m.full
                        .insert((f[1].to_string(), f[2].to_string(), dir(f[3])?, b), (num(f[5])?, num(f[6])?));
                }
                ("label", 6) => {
                    m.labels
                        .entry((f[1].to_string(), f[2].to_string(), dir(f[3])?))
                        .or_default()
                        .insert(f[4].to_string(), num(f[5])?);
                }
                _ => return Err(err()),
            }
        }
        Ok(m)
    }
}

/// Which punctuation rule produced a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PunctRule {
    SentenceFinal,
    FollowingPhrase,
    PrecedingPhrase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Head position in the reduced sentence; `None` for the root.
    pub head: Option<usize>,
    pub label: String,
    pub rule: Option<PunctRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyAnalysis {
    /// One entry per reduced-sentence position.
    pub links: Vec<Link>,
}

impl DependencyAnalysis {
    pub fn root(&self) -> Option<usize> {
        self.links.iter().position(|l| l.head.is_none())
    }

    pub fn heads(&self) -> Vec<Option<usize>> {
        self.links.iter().map(|l| l.head).collect()
    }

    /// Exactly one root and no cycles.
    pub fn is_tree(&self) -> bool {
        if self.links.iter().filter(|l| l.head.is_none()).count() != 1 {
            return false;
        }
        (0..self.links.len()).all(|start| {
            let mut at = start;
            for _ in 0..=self.links.len() {
                match self.links[at].head {
                    None => return true,
                    Some(h) => at = h,
                }
            }
            false
        })
    }
}

/// Whether giving `node` the head `head` closes a cycle through already
/// assigned heads (`None` entries are unassigned or root).
fn closes_cycle(heads: &[Option<Option<usize>>], node: usize, head: usize) -> bool {
    let mut at = head;
    for _ in 0..=heads.len() {
        if at == node {
            return true;
        }
        match heads[at] {
            Some(Some(h)) => at = h,
            _ => return false,
        }
    }
    true
}

/// Finds the highest-scoring single-root acyclic head assignment for the
/// non-punctuation positions of a reduced sentence. `beam` bounds the
/// partial assignments kept per step; `None` searches exhaustively.
/// Returns heads indexed like `categories` (punctuation entries `None`) and
/// the natural-log link score.
pub fn search_heads(
    model: &LinkModel,
    categories: &[&str],
    is_punct: &[bool],
    beam: Option<usize>,
) -> (Vec<Option<usize>>, f64) {
    let content: Vec<usize> = (0..categories.len()).filter(|&i| !is_punct[i]).collect();
    if content.is_empty() {
        return (vec![None; categories.len()], 0.0);
    }
    type Partial = (f64, Vec<Option<Option<usize>>>);
    let mut frontier: Vec<Partial> = vec![(0.0, vec![None; categories.len()])];
    for &d in &content {
        let mut next: Vec<Partial> = Vec::new();
        for (score, heads) in &frontier {
            let has_root = heads.contains(&Some(None));
            if !has_root {
                let mut h2 = heads.clone();
                h2[d] = Some(None);
                next.push((*score, h2));
            }
            for &h in &content {
                if h == d || closes_cycle(heads, d, h) {
                    continue;
                }
                let lp = model
                    .prob(categories[d], categories[h], Direction::of(d, h), distance_bucket(d, h))
                    .ln();
                let mut h2 = heads.clone();
                h2[d] = Some(Some(h));
                next.push((score + lp, h2));
            }
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        if let Some(width) = beam {
            next.truncate(width.max(1));
        }
        frontier = next;
    }
    let (score, heads) = frontier
        .into_iter()
        .find(|(_, h)| content.iter().filter(|&&i| h[i] == Some(None)).count() == 1)
        .expect("a rooted assignment always survives");
    (heads.into_iter().map(|h| h.flatten()).collect(), score)
}

/// Phrase headword: the position in `segment` whose head is the root or
/// lies outside the segment, preferring the root, then the leftmost.
fn phrase_head(heads: &[Option<usize>], segment: &[usize]) -> Option<usize> {
    let exits: Vec<usize> = segment
        .iter()
        .copied()
        .filter(|&i| heads[i].is_none_or(|h| !segment.contains(&h)))
        .collect();
    exits.iter().copied().find(|&i| heads[i].is_none()).or(exits.first().copied())
}

/// Attaches punctuation in a reduced sentence whose other positions already
/// carry heads. Phrases are the runs of words between punctuation marks.
/// Sentence-final marks head to the root; intra-sentence marks head to the
/// following phrase's headword, or the preceding phrase's when nothing
/// follows.
pub fn assign_punct_heads(heads: &[Option<usize>], words: &[&str]) -> DependencyAnalysis {
    let fin = final_punctuation(words);
    let punct: Vec<bool> = words.iter().map(|w| is_punctuation(w)).collect();
    let mut segments: Vec<Vec<usize>> = vec![Vec::new()];
    let mut segment_of = vec![0usize; words.len()];
    for i in 0..words.len() {
        if punct[i] {
            segments.push(Vec::new());
        } else {
            segments.last_mut().expect("non-empty").push(i);
        }
        segment_of[i] = segments.len() - 1;
    }
    let root = (0..words.len()).find(|&i| !punct[i] && heads[i].is_none());
    let mut links: Vec<Link> = (0..words.len())
        .map(|i| Link {
            head: heads[i],
            label: String::new(),
            rule: None,
        })
        .collect();
    for i in (0..words.len()).filter(|&i| punct[i]) {
        let (head, rule) = if fin[i] {
            (root, PunctRule::SentenceFinal)
        } else {
            // The segment after mark i starts at index segment_of[i].
            let after = segments[segment_of[i]..].iter().find(|s| !s.is_empty());
            match after {
                Some(s) => (phrase_head(heads, s), PunctRule::FollowingPhrase),
                None => {
                    let before = segments[..segment_of[i]].iter().rev().find(|s| !s.is_empty());
                    (before.and_then(|s| phrase_head(heads, s)), PunctRule::PrecedingPhrase)
                }
            }
        };
        links[i] = Link {
            head,
            label: "punct".to_string(),
            rule: Some(rule),
        };
    }
    if root.is_none() {
        // Punctuation only: the first mark is the root, the rest hang off it.
        for (i, l) in links.iter_mut().enumerate() {
            l.head = if i == 0 { None } else { Some(0) };
        }
    }
    DependencyAnalysis { links }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_buckets() {
        assert_eq!(
            [1, 2, 3, 4, 5, 9].map(|d| distance_bucket(0, d)),
            [0, 1, 2, 2, 3, 3]
        );
    }

    #[test]
    fn cycle_detection_follows_assigned_heads() {
        let heads = vec![Some(Some(1)), None, Some(None)];
        assert!(closes_cycle(&heads, 1, 0));
        assert!(!closes_cycle(&heads, 1, 2));
    }

    #[test]
    fn link_model_round_trips() {
        let ev = LinkEvents {
            categories: vec!["NN".into(), "VB".into()],
            positions: vec![0, 1],
            heads: vec![Some(1), None],
            labels: vec!["subj".into(), "root".into()],
        };
        let m = LinkModel::train([&ev]);
        assert_eq!(m.label("NN", "VB", Direction::HeadRight), "subj");
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(LinkModel::read(&buf[..]).unwrap(), m);
        let p = m.prob("NN", "VB", Direction::HeadRight, 0);
        assert!(p > 0.5 && p < 1.0);
    }
}

//! Gap tags: labels on the boundary before each word that encode baseNP
//! bracketing.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GapTag {
    /// A baseNP starts at the following word.
    S,
    /// Both neighbours belong to the same baseNP.
    C,
    /// A baseNP ends at the preceding word.
    E,
    /// One baseNP ends and the next starts.
    B,
    /// Neither neighbour is in a baseNP.
    N,
}

impl GapTag {
    /// Also the tie-break order: earlier wins.
    pub const ALL: [GapTag; 5] = [GapTag::S, GapTag::C, GapTag::E, GapTag::B, GapTag::N];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether this tag may label a gap whose left word is (or is not) inside a baseNP.
    pub fn allowed_after(self, left_inside: bool) -> bool {
        match self {
            GapTag::S | GapTag::N => !left_inside,
            GapTag::C | GapTag::E | GapTag::B => left_inside,
        }
    }

    /// Whether the word to the right of this gap is inside a baseNP.
    pub fn right_inside(self) -> bool {
        matches!(self, GapTag::S | GapTag::C | GapTag::B)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "S" => GapTag::S,
            "C" => GapTag::C,
            "E" => GapTag::E,
            "B" => GapTag::B,
            "N" => GapTag::N,
            _ => return None,
        })
    }
}

impl fmt::Display for GapTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GapTag::S => "S",
            GapTag::C => "C",
            GapTag::E => "E",
            GapTag::B => "B",
            GapTag::N => "N",
        };
        f.write_str(s)
    }
}

/// Checks a sequence with one tag per word, the first being the gap before
/// the first word.
pub fn is_valid_sequence(gaps: &[GapTag]) -> bool {
    let mut inside = false;
    for g in gaps {
        if !g.allowed_after(inside) {
            return false;
        }
        inside = g.right_inside();
    }
    true
}

/// Inclusive `(first, last)` word ranges of the baseNPs a valid sequence encodes.
pub fn spans(gaps: &[GapTag]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, g) in gaps.iter().enumerate() {
        if matches!(g, GapTag::E | GapTag::B) {
            if let Some(s) = open.take() {
                out.push((s, i - 1));
            }
        }
        if matches!(g, GapTag::S | GapTag::B) {
            open = Some(i);
        }
    }
    if let Some(s) = open {
        out.push((s, gaps.len() - 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::GapTag::*;
    use super::*;

    #[test]
    fn validity_follows_bracketing() {
        assert!(is_valid_sequence(&[S, C, E, N]));
        assert!(is_valid_sequence(&[S, B, C]));
        assert!(is_valid_sequence(&[N, N, S]));
        assert!(!is_valid_sequence(&[C]));
        assert!(!is_valid_sequence(&[N, E]));
        assert!(!is_valid_sequence(&[S, S]));
        assert!(!is_valid_sequence(&[N, B]));
    }

    #[test]
    fn spans_close_at_end_and_at_b() {
        assert_eq!(spans(&[S, C, B, E, N, S]), vec![(0, 1), (2, 2), (5, 5)]);
        assert_eq!(spans(&[N, N]), vec![]);
    }
}
